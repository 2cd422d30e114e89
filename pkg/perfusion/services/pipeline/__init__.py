"""
🔁 PIPELINE

Stage functions over case directories and the seeded end-to-end experiment.
"""

from .provenance import resolve_threads, run_record, write_json, write_run_json
from .stages import (
    AIF_SOURCES,
    TISSUE_MASK,
    FitOptions,
    SimulationPlan,
    case_dirs,
    case_name,
    case_seed,
    collect_samples,
    fit_case,
    healthy_indices,
    infer_case,
    load_fit_case,
    preprocess_volume,
    simulate_cohort,
)
from .experiment import SPLITS, ExperimentConfig, ExperimentPipeline

__all__ = [
    "resolve_threads",
    "run_record",
    "write_json",
    "write_run_json",
    "AIF_SOURCES",
    "TISSUE_MASK",
    "FitOptions",
    "SimulationPlan",
    "case_dirs",
    "case_name",
    "case_seed",
    "collect_samples",
    "fit_case",
    "healthy_indices",
    "infer_case",
    "load_fit_case",
    "preprocess_volume",
    "simulate_cohort",
    "SPLITS",
    "ExperimentConfig",
    "ExperimentPipeline",
]
