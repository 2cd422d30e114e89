"""
🗂️ TRAINING SAMPLES

One sample is one slice: the normalized time series (C, H, W) paired with
the normalized CBV/CBF/TTP target maps (3, H, W) and an optional loss mask.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from perfusion.exceptions import InvariantViolationError, NormalizationError, ShapeMismatchError
from perfusion.services.volume_model import BinaryMask, TimeSeriesVolume, normalize_map

from .model import OUTPUT_KINDS

BASELINE_FRAMES = 4


@dataclass(frozen=True)
class InputNormalization:
    """Enhancement window in HU mapped onto [0, 1], plus the frame stride."""

    hu_window: tuple = (0.0, 60.0)
    time_stride: int = 1

    def __post_init__(self):
        lo, hi = (float(v) for v in self.hu_window)
        if hi <= lo:
            raise NormalizationError(f"input HU window needs hi > lo, got ({lo}, {hi})")
        object.__setattr__(self, "hu_window", (lo, hi))

    @classmethod
    def for_config(cls, config):
        return cls(hu_window=tuple(config.input_hu_window), time_stride=int(config.time_stride))

    def apply(self, vol: TimeSeriesVolume):
        """Return (nz, C, H, W) float32 network inputs, one per slice."""
        data = vol.data.astype(np.float64)
        baseline = data[:BASELINE_FRAMES].mean(axis=0)
        enhancement = data - baseline[None]
        lo, hi = self.hu_window
        scaled = np.clip((enhancement - lo) / (hi - lo), 0.0, 1.0)
        strided = scaled[::int(self.time_stride)]
        return np.ascontiguousarray(strided.transpose(1, 0, 2, 3)).astype(np.float32)


def target_stack(maps: dict):
    """(nz, 3, H, W) normalized CBV, CBF, TTP targets from physical maps."""
    missing = [kind.value for kind in OUTPUT_KINDS if kind not in maps]
    if missing:
        raise InvariantViolationError(f"target maps missing {missing}")
    channels = [normalize_map(maps[kind]).data for kind in OUTPUT_KINDS]
    return np.stack(channels, axis=1).astype(np.float32)


@dataclass(frozen=True, eq=False)
class TrainingSample:
    x: np.ndarray
    y: np.ndarray
    mask: Optional[np.ndarray] = None
    case_id: str = ""

    def __post_init__(self):
        if self.x.ndim != 3 or self.y.ndim != 3 or self.x.shape[1:] != self.y.shape[1:]:
            raise ShapeMismatchError(f"sample input {self.x.shape} and target {self.y.shape} do not align")
        if self.mask is not None and self.mask.shape != self.x.shape[1:]:
            raise ShapeMismatchError("sample mask must match the slice shape")


def samples_from_case(vol: TimeSeriesVolume, maps: dict, norm: InputNormalization,
                      mask: BinaryMask = None, case_id=""):
    """One TrainingSample per slice of the case."""
    inputs = norm.apply(vol)
    targets = target_stack(maps)
    if inputs.shape[0] != targets.shape[0] or inputs.shape[2:] != targets.shape[2:]:
        raise ShapeMismatchError(f"volume {vol.dims} and target maps do not share geometry")
    masks = mask.data if mask is not None else [None] * inputs.shape[0]
    return [
        TrainingSample(x=inputs[z], y=targets[z], mask=None if masks[z] is None else np.asarray(masks[z]),
                       case_id=f"{case_id}:{z}" if case_id else str(z))
        for z in range(inputs.shape[0])
    ]


def stack_samples(samples):
    x = np.stack([s.x for s in samples])
    y = np.stack([s.y for s in samples])
    if all(s.mask is None for s in samples):
        return x, y, None
    mask = np.stack([s.mask if s.mask is not None else np.ones(s.x.shape[1:], dtype=bool) for s in samples])
    return x, y, mask
