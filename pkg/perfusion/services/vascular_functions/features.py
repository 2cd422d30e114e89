"""
📐 CURVE FEATURES

Peak, time-to-peak, FWHM and area of enhancement curves, computed for one
curve or for a whole (n_voxels, nt) batch at once.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from perfusion.exceptions import InvariantViolationError
from perfusion.services.volume_model import Curve

BASELINE_FRAMES = 4


@dataclass(frozen=True)
class CurveFeatures:
    peak: float
    ttp: float
    fwhm: float
    auc: float
    baseline: float
    flagged: bool = False

    @property
    def scorable(self):
        return not self.flagged


def enhancement(samples):
    """Samples minus the pre-bolus baseline (mean of the first four frames) along the last axis."""
    samples = np.asarray(samples, dtype=np.float64)
    return samples - samples[..., :BASELINE_FRAMES].mean(axis=-1, keepdims=True)


def feature_table(samples, dt, t0=0.0, baseline=None):
    """
    Vectorized features for a (n, nt) batch.

    Returns a dict of arrays: peak, ttp, fwhm, auc, baseline, flagged. Curves
    whose peak enhancement is not positive are flagged and carry peak 0 and
    fwhm 0.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, nt = samples.shape
    if nt < 8:
        raise InvariantViolationError(f"curve features need nt >= 8, got {nt}")
    if baseline is None:
        baseline = samples[:, :BASELINE_FRAMES].mean(axis=1)
    baseline = np.broadcast_to(np.asarray(baseline, dtype=np.float64), (n,))
    enh = samples - baseline[:, None]

    peak_index = np.argmax(enh, axis=1)
    rows = np.arange(n)
    peak = enh[rows, peak_index]
    times = t0 + dt * np.arange(nt)
    ttp = times[peak_index]
    auc = trapezoid(np.clip(enh, 0.0, None), dx=dt, axis=1)

    flagged = ~(peak > 0)
    half = peak / 2.0
    index = np.arange(nt)[None, :]
    below = enh < half[:, None]

    left = np.where(below & (index < peak_index[:, None]), index, -1).max(axis=1)
    right = np.where(below & (index > peak_index[:, None]), index, nt).min(axis=1)

    left_time = np.full(n, times[0])
    has_left = left >= 0
    li = left[has_left]
    e0, e1 = enh[rows[has_left], li], enh[rows[has_left], li + 1]
    left_time[has_left] = times[li] + (half[has_left] - e0) / (e1 - e0) * dt

    right_time = np.full(n, times[-1])
    has_right = right < nt
    ri = right[has_right]
    e0, e1 = enh[rows[has_right], ri - 1], enh[rows[has_right], ri]
    right_time[has_right] = times[ri - 1] + (e0 - half[has_right]) / (e0 - e1) * dt

    fwhm = np.where(flagged, 0.0, right_time - left_time)
    return {
        "peak": np.where(flagged, 0.0, peak),
        "ttp": ttp,
        "fwhm": fwhm,
        "auc": auc,
        "baseline": baseline.copy(),
        "flagged": flagged,
    }


def curve_features(tac: Curve, baseline=None) -> CurveFeatures:
    """Features of one curve; a curve that never rises above baseline comes back flagged."""
    table = feature_table(tac.samples[None, :], tac.dt, tac.t0, baseline=baseline)
    return CurveFeatures(
        peak=float(table["peak"][0]),
        ttp=float(table["ttp"][0]),
        fwhm=float(table["fwhm"][0]),
        auc=float(table["auc"][0]),
        baseline=float(table["baseline"][0]),
        flagged=bool(table["flagged"][0]),
    )
