import math

import numpy as np
from scipy import stats

from perfusion.exceptions import InvariantViolationError, UndefinedDiceError, ZeroVarianceError
from perfusion.services.volume_model import BinaryMask

UNIT_SNAP = 32 * np.finfo(np.float64).eps


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|A∩B| / (|A| + |B|); raises UndefinedDiceError when both masks are empty."""
    a.require_same_geometry(b)
    total = a.count + b.count
    if total == 0:
        raise UndefinedDiceError("both masks are empty")
    overlap = int(np.logical_and(a.data, b.data).sum())
    return 2.0 * overlap / total


def volume_ml(mask: BinaryMask, spacing=None) -> float:
    sx, sy, sz = mask.spacing if spacing is None else spacing
    return mask.count * float(sx) * float(sy) * float(sz) / 1000.0


def _paired(xs, ys):
    xs = np.asarray(xs, dtype=np.float64).reshape(-1)
    ys = np.asarray(ys, dtype=np.float64).reshape(-1)
    if xs.size != ys.size:
        raise InvariantViolationError(f"pearson needs paired samples, got {xs.size} and {ys.size}")
    if xs.size < 3:
        raise InvariantViolationError(f"pearson needs at least 3 pairs, got {xs.size}")
    if np.ptp(xs) == 0 or np.ptp(ys) == 0:
        raise ZeroVarianceError("pearson is undefined for a constant sample")
    return xs, ys


def pearson_test(xs, ys):
    """
    Sample correlation and its two-sided p-value. An r within a few ulps of
    ±1 is returned as exactly ±1 with p = 0.
    """
    xs, ys = _paired(xs, ys)
    result = stats.pearsonr(xs, ys)
    r = float(np.clip(result[0], -1.0, 1.0))
    if 1.0 - abs(r) <= UNIT_SNAP:
        return math.copysign(1.0, r), 0.0
    return r, float(result[1])


def pearson(xs, ys) -> float:
    return pearson_test(xs, ys)[0]
