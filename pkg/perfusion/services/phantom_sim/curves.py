"""
📈 BOLUS AND RESPONSE CURVES

The forward model shared by the phantom generator and the perfusion fitter:

    TAC = (AIF ⊛ IRF) · dt, causal, truncated to nt samples

The IRF is a box on the lag axis. Sample i covers the lag interval
[i·dt, (i+1)·dt); its height is the box height times the fraction of that
interval covered by [delay, delay + mtt). Fully covered samples carry the
box height exactly and the discrete area equals the box area whenever the
box lies inside the window.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from perfusion.conf import unit_constant
from perfusion.exceptions import GridMismatchError, InvariantViolationError
from perfusion.services.volume_model import Curve

from .config import GammaVariateParams


@dataclass(frozen=True)
class TimeGrid:
    nt: int
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        if int(self.nt) < 2 or not self.dt > 0:
            raise InvariantViolationError(f"invalid time grid nt={self.nt} dt={self.dt}")

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    @classmethod
    def of(cls, curve: Curve):
        return cls(curve.nt, curve.dt, curve.t0)


def _as_grid(grid):
    if isinstance(grid, TimeGrid):
        return grid
    return TimeGrid(*grid)


def _gamma_samples(times, amplitude, onset, alpha, beta):
    lag = times - onset
    out = np.zeros_like(times, dtype=np.float64)
    pos = lag > 0
    x = lag[pos] / (alpha * beta)
    out[pos] = amplitude * x ** alpha * np.exp(alpha - lag[pos] / beta)
    return out


def gamma_variate(params: GammaVariateParams, grid) -> Curve:
    """Peak-normalized gamma variate, plus an optional delayed recirculation bolus."""
    grid = _as_grid(grid)
    times = grid.times
    samples = _gamma_samples(times, params.amplitude, params.onset, params.alpha, params.beta)
    if params.recirculation_fraction > 0:
        samples = samples + _gamma_samples(
            times,
            params.amplitude * params.recirculation_fraction,
            params.onset + params.recirculation_delay,
            params.alpha,
            2.0 * params.beta,
        )
    return Curve(samples=samples, dt=grid.dt, t0=grid.t0)


def box_coverage(mtt, delay, nt, dt):
    """Fraction of each lag sample [i·dt, (i+1)·dt) covered by [delay, delay + mtt)."""
    starts = dt * np.arange(nt)
    overlap = np.minimum(starts + dt, delay + mtt) - np.maximum(starts, delay)
    return np.clip(overlap, 0.0, dt) / dt


def unit_box(mtt, delay, nt, dt):
    """Unit-area box IRF samples (height 1/mtt)."""
    if not mtt > 0:
        raise InvariantViolationError(f"mtt must be > 0, got {mtt}")
    return box_coverage(mtt, delay, nt, dt) / mtt


def box_irf(cbv, mtt, delay, grid, unit_k=None) -> Curve:
    """Box IRF with area k·cbv on the lag axis (the returned curve starts at lag 0)."""
    grid = _as_grid(grid)
    k = unit_constant() if unit_k is None else unit_k
    samples = k * cbv * unit_box(mtt, delay, grid.nt, grid.dt)
    return Curve(samples=samples, dt=grid.dt, t0=0.0)


def convolve_causal(aif_samples, irf_samples, dt):
    """(aif ⊛ irf)·dt truncated to len(aif)."""
    nt = len(aif_samples)
    return np.convolve(aif_samples, irf_samples)[:nt] * dt


def synth_tac(aif: Curve, cbv, mtt, delay, grid=None, unit_k=None) -> Curve:
    """Tissue enhancement for a box IRF driven by `aif`; output shares the AIF grid."""
    if grid is not None:
        grid = _as_grid(grid)
        if (grid.nt, grid.dt, grid.t0) != (aif.nt, aif.dt, aif.t0):
            raise GridMismatchError(f"AIF grid {(aif.nt, aif.dt, aif.t0)} does not match {tuple(grid.__dict__.values())}")
    if cbv == 0:
        return aif.with_samples(np.zeros(aif.nt))
    irf = box_irf(cbv, mtt, delay, TimeGrid.of(aif), unit_k=unit_k)
    return aif.with_samples(convolve_causal(aif.samples, irf.samples, aif.dt))


def trapezoid_area(samples, dt):
    return float(trapezoid(samples, dx=dt))


def delayed_equal_area_copy(curve: Curve, delay_s) -> Curve:
    """The curve delayed by `delay_s` and rescaled so its trapezoidal area matches the original."""
    shifted = np.interp(curve.times - delay_s, curve.times, curve.samples, left=0.0, right=0.0)
    area, shifted_area = trapezoid_area(curve.samples, curve.dt), trapezoid_area(shifted, curve.dt)
    if shifted_area > 0:
        shifted = shifted * (area / shifted_area)
    return curve.with_samples(shifted)
