"""
⚙️ BOX-IRF REGRESSION FOR ONE VOXEL

Model: c(t) = a · (aif ⊛ unit_box(mtt, delay))(t) · dt with a = k · cbv.

The amplitude is linear and solved in closed form for every (mtt, delay)
pair of the search grid; the grid optimum is then refined by coordinate
descent with bounded scalar line searches, one grid cell either side of the
current point. A refinement step is only taken when it lowers the residual.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

from perfusion.conf import unit_constant
from perfusion.exceptions import GridMismatchError
from perfusion.services.phantom_sim import convolve_causal, unit_box
from perfusion.services.volume_model import Curve

from .config import FitConfig

LINE_SEARCH_XATOL = 1e-4
_EDGE_TOL = 1e-6


class FitStatus(str, Enum):
    OK = "OK"
    ZERO_SIGNAL = "ZERO_SIGNAL"
    BOUNDARY = "BOUNDARY"


STATUS_CODES = {FitStatus.OK: 0, FitStatus.ZERO_SIGNAL: 1, FitStatus.BOUNDARY: 2}


@dataclass(frozen=True)
class VoxelFit:
    cbv: float
    cbf: float
    mtt: float
    delay: float
    ttp: float
    rss: float
    status: FitStatus = FitStatus.OK

    @classmethod
    def zero(cls, rss, status=FitStatus.ZERO_SIGNAL):
        return cls(cbv=0.0, cbf=0.0, mtt=0.0, delay=0.0, ttp=0.0, rss=float(rss), status=status)


def model_tac(aif: Curve, mtt, delay) -> Curve:
    """Unit-amplitude basis curve: aif ⊛ unit box (area 1) · dt."""
    return aif.with_samples(convolve_causal(aif.samples, unit_box(mtt, delay, aif.nt, aif.dt), aif.dt))


class FitBasis:
    """Precomputed basis curves for every (mtt, delay) grid pair of one AIF."""

    def __init__(self, aif_samples, dt, t0, cfg: FitConfig, unit_k=None):
        self.aif = np.asarray(aif_samples, dtype=np.float64)
        self.nt = self.aif.size
        self.dt = float(dt)
        self.t0 = float(t0)
        self.cfg = cfg
        self.unit_k = unit_constant() if unit_k is None else float(unit_k)
        self.mtt_grid = np.asarray(cfg.mtt_grid)
        self.delay_grid = np.asarray(cfg.delay_grid)
        basis = np.empty((self.mtt_grid.size, self.delay_grid.size, self.nt))
        for i, mtt in enumerate(self.mtt_grid):
            for j, delay in enumerate(self.delay_grid):
                basis[i, j] = self.curve(mtt, delay)
        self.basis = basis.reshape(-1, self.nt)
        self.norms = np.einsum("ij,ij->i", self.basis, self.basis)

    @classmethod
    def for_curve(cls, aif: Curve, cfg: FitConfig, unit_k=None):
        return cls(aif.samples, aif.dt, aif.t0, cfg, unit_k=unit_k)

    def curve(self, mtt, delay):
        return convolve_causal(self.aif, unit_box(mtt, delay, self.nt, self.dt), self.dt)

    def amplitude(self, b, c, bb=None):
        bb = float(b @ b) if bb is None else bb
        if bb <= 0:
            return 0.0
        a = float(b @ c) / bb
        return max(0.0, a) if self.cfg.nonneg else a

    def rss(self, c, mtt, delay):
        b = self.curve(mtt, delay)
        a = self.amplitude(b, c)
        residual = c - a * b
        return float(residual @ residual)

    def grid_search(self, c):
        """Return (flat index, amplitude, rss, rss of every pair); first occurrence wins ties."""
        dots = self.basis @ c
        safe = np.where(self.norms > 0, self.norms, 1.0)
        amplitudes = np.where(self.norms > 0, dots / safe, 0.0)
        if self.cfg.nonneg:
            amplitudes = np.maximum(amplitudes, 0.0)
        residuals = c[None, :] - amplitudes[:, None] * self.basis
        rss = np.einsum("ij,ij->i", residuals, residuals)
        best = int(np.argmin(rss))
        return best, float(amplitudes[best]), float(rss[best]), rss


def _refine(basis: FitBasis, c, mtt, delay, rss):
    cfg = basis.cfg
    m_lo, m_hi = basis.mtt_grid[0], basis.mtt_grid[-1]
    d_lo, d_hi = basis.delay_grid[0], basis.delay_grid[-1]
    ratio = cfg.mtt_ratio
    d_step = float(np.max(np.diff(basis.delay_grid))) if basis.delay_grid.size > 1 else basis.dt

    for _ in range(int(cfg.max_refine_iters)):
        previous = rss

        lo, hi = max(m_lo, mtt / ratio), min(m_hi, mtt * ratio)
        if hi > lo:
            found = minimize_scalar(lambda m: basis.rss(c, m, delay), bounds=(lo, hi),
                                    method="bounded", options={"xatol": LINE_SEARCH_XATOL})
            if found.fun < rss:
                mtt, rss = float(found.x), float(found.fun)

        lo, hi = max(d_lo, delay - d_step), min(d_hi, delay + d_step)
        if hi > lo:
            found = minimize_scalar(lambda d: basis.rss(c, mtt, d), bounds=(lo, hi),
                                    method="bounded", options={"xatol": LINE_SEARCH_XATOL})
            if found.fun < rss:
                delay, rss = float(found.x), float(found.fun)

        if previous <= 0 or (previous - rss) / previous < cfg.refine_tolerance:
            break
    return mtt, delay, rss


def _on_edge(value, grid):
    if grid.size < 2:
        return False
    scale = max(abs(grid[-1]), 1.0)
    return abs(value - grid[0]) <= _EDGE_TOL * scale or abs(value - grid[-1]) <= _EDGE_TOL * scale


def noise_floor(c):
    """Median absolute frame-to-frame difference."""
    return float(np.median(np.abs(np.diff(c))))


def fit_samples(c, basis: FitBasis) -> VoxelFit:
    """Fit one baseline-subtracted curve against a prepared basis."""
    c = np.asarray(c, dtype=np.float64)
    cfg = basis.cfg
    peak = float(c.max())
    if not peak > 0 or peak < cfg.zero_signal_factor * noise_floor(c):
        return VoxelFit.zero(rss=float(c @ c))

    # work on the unit-norm curve so the search does not depend on signal scale
    scale = float(np.sqrt(c @ c))
    unit = c / scale
    best, _, rss, _ = basis.grid_search(unit)
    mtt = float(basis.mtt_grid[best // basis.delay_grid.size])
    delay = float(basis.delay_grid[best % basis.delay_grid.size])
    if cfg.refine:
        mtt, delay, rss = _refine(basis, unit, mtt, delay, rss)

    b = basis.curve(mtt, delay)
    amplitude = basis.amplitude(b, unit) * scale
    if not amplitude > 0:
        return VoxelFit.zero(rss=float(c @ c))
    cbv = amplitude / basis.unit_k
    cbf = 60.0 * cbv / mtt
    if cfg.ttp_raw:
        ttp = basis.t0 + basis.dt * int(np.argmax(c))
    else:
        ttp = basis.t0 + basis.dt * int(np.argmax(amplitude * b))
    status = FitStatus.BOUNDARY if (_on_edge(mtt, basis.mtt_grid) or _on_edge(delay, basis.delay_grid)) else FitStatus.OK
    return VoxelFit(cbv=cbv, cbf=cbf, mtt=mtt, delay=delay, ttp=max(ttp, 0.0), rss=rss * scale * scale, status=status)


def fit_voxel(tac: Curve, aif: Curve, cfg: FitConfig = None, unit_k=None) -> VoxelFit:
    """Fit a baseline-subtracted tissue curve; both curves must share one time grid."""
    if not tac.same_grid(aif):
        raise GridMismatchError(f"tac grid {(tac.nt, tac.dt, tac.t0)} differs from aif grid {(aif.nt, aif.dt, aif.t0)}")
    cfg = cfg or FitConfig.from_settings(dt=aif.dt)
    return fit_samples(tac.samples, FitBasis.for_curve(aif, cfg, unit_k=unit_k))
