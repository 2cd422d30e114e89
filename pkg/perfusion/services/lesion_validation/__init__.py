"""
🎯 LESION VALIDATION

Threshold segmentation of core and penumbra, overlap and volume agreement
between reference and test maps over a cohort.
"""

from .segmentation import REQUIRED_KINDS, SegmentationThresholds, healthy_reference, remove_small_components, segment
from .metrics import dice, pearson, pearson_test, volume_ml
from .cohort import (
    NORMAL_PERFUSION,
    REPORT_COLUMNS,
    CaseResult,
    CohortCase,
    LesionValidator,
    ValidationReport,
    evaluate_case,
    evaluate_cohort,
    lesion_statistics,
    load_cohort,
    load_map_set,
    write_report,
)

__all__ = [
    "REQUIRED_KINDS",
    "SegmentationThresholds",
    "healthy_reference",
    "remove_small_components",
    "segment",
    "dice",
    "pearson",
    "pearson_test",
    "volume_ml",
    "NORMAL_PERFUSION",
    "REPORT_COLUMNS",
    "CaseResult",
    "CohortCase",
    "LesionValidator",
    "ValidationReport",
    "evaluate_case",
    "evaluate_cohort",
    "lesion_statistics",
    "load_cohort",
    "load_map_set",
    "write_report",
]
