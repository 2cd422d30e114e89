"""
📋 COHORT VALIDATION

Segments reference and test maps of every case with the same thresholds and
compares them: Dice per lesion type, lesion volumes and their correlation.
Cases whose reference shows neither core nor penumbra are excluded as
normal perfusion and never enter a statistic.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from perfusion.exceptions import (
    ArtifactIOError,
    CohortExcludedError,
    InvariantViolationError,
    UndefinedDiceError,
    ZeroVarianceError,
)
from perfusion.services.volume_model import BinaryMask, read_map, read_mask

from .metrics import dice, pearson_test, volume_ml
from .segmentation import REQUIRED_KINDS, SegmentationThresholds, segment

logger = logging.getLogger(__name__)

MIN_COHORT = 3
NORMAL_PERFUSION = "normal perfusion"
LESION_TYPES = ("core", "penumbra")
REPORT_COLUMNS = [
    "case",
    "dice_core",
    "dice_penumbra",
    "vol_core_gt_ml",
    "vol_core_test_ml",
    "vol_pen_gt_ml",
    "vol_pen_test_ml",
    "excluded",
    "reason",
]


@dataclass(frozen=True)
class CohortCase:
    case_id: str
    reference_maps: dict
    test_maps: dict
    brain_mask: BinaryMask


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    dice_core: Optional[float]
    dice_penumbra: Optional[float]
    vol_core_gt_ml: float
    vol_core_test_ml: float
    vol_pen_gt_ml: float
    vol_pen_test_ml: float
    excluded: bool = False
    reason: str = ""

    def __post_init__(self):
        for name in ("dice_core", "dice_penumbra"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise InvariantViolationError(f"{name} must lie in [0, 1], got {value}")
        for name in ("vol_core_gt_ml", "vol_core_test_ml", "vol_pen_gt_ml", "vol_pen_test_ml"):
            if getattr(self, name) < 0:
                raise InvariantViolationError(f"{name} must be >= 0")

    def dice_for(self, lesion):
        return self.dice_core if lesion == "core" else self.dice_penumbra

    def volumes_for(self, lesion):
        if lesion == "core":
            return self.vol_core_gt_ml, self.vol_core_test_ml
        return self.vol_pen_gt_ml, self.vol_pen_test_ml

    def to_row(self):
        row = asdict(self)
        row["case"] = row.pop("case_id")
        return {column: row[column] for column in REPORT_COLUMNS}


@dataclass
class ValidationReport:
    cases: list
    summary: dict
    thresholds: dict = field(default_factory=dict)

    @property
    def n_cases(self):
        return len(self.cases)

    @property
    def excluded_cases(self):
        return [case.case_id for case in self.cases if case.excluded]

    @property
    def n_excluded(self):
        return len(self.excluded_cases)

    def to_dict(self):
        return {
            "n_cases": self.n_cases,
            "n_excluded": self.n_excluded,
            "excluded_cases": self.excluded_cases,
            "summary": self.summary,
            "thresholds": self.thresholds,
            "cases": [case.to_row() for case in self.cases],
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([case.to_row() for case in self.cases], columns=REPORT_COLUMNS)


def _dice_or_none(a, b):
    try:
        return dice(a, b)
    except UndefinedDiceError:
        return None


def evaluate_case(case: CohortCase, thr: SegmentationThresholds) -> CaseResult:
    gt_core, gt_pen = segment(case.reference_maps, case.brain_mask, thr)
    test_core, test_pen = segment(case.test_maps, case.brain_mask, thr)
    volumes = dict(
        vol_core_gt_ml=volume_ml(gt_core),
        vol_core_test_ml=volume_ml(test_core),
        vol_pen_gt_ml=volume_ml(gt_pen),
        vol_pen_test_ml=volume_ml(test_pen),
    )
    if gt_core.is_empty() and gt_pen.is_empty():
        return CaseResult(case.case_id, None, None, excluded=True, reason=NORMAL_PERFUSION, **volumes)
    # a lesion type absent from the reference contributes nothing for that type
    dice_core = None if gt_core.is_empty() else _dice_or_none(gt_core, test_core)
    dice_pen = None if gt_pen.is_empty() else _dice_or_none(gt_pen, test_pen)
    return CaseResult(case.case_id, dice_core, dice_pen, **volumes)


def _sd(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def lesion_statistics(results, lesion) -> dict:
    """Dice mean/sd/min/max and volume correlation over the cases that carry this lesion type."""
    included = [r for r in results if not r.excluded and r.dice_for(lesion) is not None]
    scores = np.array([r.dice_for(lesion) for r in included], dtype=np.float64)
    block = {"n": len(included), "dice_mean": None, "dice_sd": None, "dice_min": None, "dice_max": None,
             "pearson_r": None, "pearson_p": None}
    if not included:
        return block
    block.update(
        dice_mean=float(scores.mean()),
        dice_sd=_sd(scores),
        dice_min=float(scores.min()),
        dice_max=float(scores.max()),
    )
    gt_volumes, test_volumes = zip(*(r.volumes_for(lesion) for r in included))
    try:
        block["pearson_r"], block["pearson_p"] = pearson_test(gt_volumes, test_volumes)
    except (ZeroVarianceError, InvariantViolationError) as exc:
        logger.warning(f"⚠️ No {lesion} volume correlation: {exc}")
    return block


def evaluate_cohort(cases, thr: SegmentationThresholds = None) -> ValidationReport:
    cases = list(cases)
    if len(cases) < MIN_COHORT:
        raise InvariantViolationError(f"a cohort needs at least {MIN_COHORT} cases, got {len(cases)}")
    ids = [case.case_id for case in cases]
    if len(set(ids)) != len(ids):
        raise InvariantViolationError("case ids must be unique")
    thr = thr or SegmentationThresholds.from_settings()

    results = sorted((evaluate_case(case, thr) for case in cases), key=lambda r: r.case_id)
    if all(r.excluded for r in results):
        raise CohortExcludedError(f"all {len(results)} cases show normal perfusion")

    report = ValidationReport(
        cases=results,
        summary={lesion: lesion_statistics(results, lesion) for lesion in LESION_TYPES},
        thresholds=thr.as_dict(),
    )
    core, pen = report.summary["core"], report.summary["penumbra"]
    logger.info(
        f"📋 Validated {report.n_cases} cases ({report.n_excluded} excluded): "
        f"core Dice {_fmt(core['dice_mean'])} ± {_fmt(core['dice_sd'])}, "
        f"penumbra Dice {_fmt(pen['dice_mean'])} ± {_fmt(pen['dice_sd'])}"
    )
    return report


def _fmt(value):
    return "n/a" if value is None else f"{value:.2f}"


def write_report(report: ValidationReport, out_dir) -> None:
    """`report.json` with the summary and every case, `report.csv` with one row per case."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        report.to_frame().to_csv(out_dir / "report.csv", index=False, lineterminator="\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write validation report: {exc}", out_dir) from exc


def load_map_set(case_dir) -> dict:
    case_dir = Path(case_dir)
    return {kind: read_map(case_dir / kind.value, kind=kind) for kind in REQUIRED_KINDS}


def load_cohort(reference_root, test_root, mask_name="brain_mask", case_ids=None) -> list:
    """
    Pair `<reference_root>/<case>/` with `<test_root>/<case>/` for every case
    directory of the test root, or for `case_ids` when given. The brain mask
    comes from the reference.
    """
    reference_root, test_root = Path(reference_root), Path(test_root)
    if not reference_root.is_dir():
        raise ArtifactIOError("reference map directory not found", reference_root)
    if not test_root.is_dir():
        raise ArtifactIOError("test map directory not found", test_root)
    if case_ids is None:
        case_ids = [p.name for p in test_root.iterdir() if p.is_dir()]
    cases = []
    for case_id in sorted(case_ids):
        reference_dir, test_dir = reference_root / case_id, test_root / case_id
        for directory in (reference_dir, test_dir):
            if not directory.is_dir():
                raise ArtifactIOError(f"no maps for case {case_id}", directory)
        cases.append(CohortCase(
            case_id=case_id,
            reference_maps=load_map_set(reference_dir),
            test_maps=load_map_set(test_dir),
            brain_mask=read_mask(reference_dir / mask_name),
        ))
    return cases


class LesionValidator:
    """Runs the cohort comparison between two map directories and writes the report."""

    def __init__(self, thresholds: SegmentationThresholds = None, mask_name="brain_mask"):
        self.service_name = "Lesion Validator"
        self.thresholds = thresholds or SegmentationThresholds.from_settings()
        self.mask_name = mask_name

    def validate(self, reference_root, test_root, out_dir=None, case_ids=None) -> ValidationReport:
        cases = load_cohort(reference_root, test_root, mask_name=self.mask_name, case_ids=case_ids)
        report = evaluate_cohort(cases, self.thresholds)
        if out_dir is not None:
            write_report(report, out_dir)
        return report
