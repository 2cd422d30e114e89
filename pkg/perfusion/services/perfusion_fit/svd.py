"""
📉 TRUNCATED-SVD DECONVOLUTION BASELINE

Block-circulant AIF matrix over a zero-padded window of 2·nt samples:

    A[i, j] = aif_pad[(i - j) mod L] · dt

Singular values at or below threshold_frac · σ_max are dropped.
"""

import logging

import numpy as np

from perfusion.conf import unit_constant
from perfusion.exceptions import EmptyMaskError, GridMismatchError, InvariantViolationError, ShapeMismatchError, SingularSystemError
from perfusion.services.vascular_functions import enhancement
from perfusion.services.volume_model import BinaryMask, Curve, ParametricMap, TimeSeriesVolume

from .config import MAP_KINDS, svd_threshold_default
from .voxel import FitStatus, VoxelFit

logger = logging.getLogger(__name__)


def circulant_matrix(aif_samples, dt):
    aif_samples = np.asarray(aif_samples, dtype=np.float64)
    nt = aif_samples.size
    length = 2 * nt
    padded = np.zeros(length)
    padded[:nt] = aif_samples
    rows = np.arange(length)[:, None]
    cols = np.arange(length)[None, :]
    return padded[(rows - cols) % length] * dt


def truncated_pseudo_inverse(matrix, threshold_frac):
    if not 0.0 <= threshold_frac <= 1.0:
        raise InvariantViolationError(f"threshold_frac must lie in [0, 1], got {threshold_frac}")
    u, s, vt = np.linalg.svd(matrix)
    if s.size == 0 or s[0] <= 0:
        raise SingularSystemError("AIF matrix has no non-zero singular value")
    inverse = np.zeros_like(s)
    keep = s > threshold_frac * s[0]
    inverse[keep] = 1.0 / s[keep]
    return (vt.T * inverse) @ u.T


def _params_from_irf(irf, c, reconvolved, dt, t0, unit_k):
    nt = c.size
    cbf = 60.0 * max(float(irf.max()), 0.0) / unit_k
    cbv = max(float(irf.sum()) * dt / unit_k, 0.0)
    mtt = 60.0 * cbv / cbf if cbf > 0 else 0.0
    peak_lag = int(np.argmax(irf))
    delay = peak_lag * dt if peak_lag < nt else 0.0
    ttp = max(t0 + dt * int(np.argmax(c)), 0.0)
    residual = c - reconvolved[:nt]
    status = FitStatus.OK if cbf > 0 else FitStatus.ZERO_SIGNAL
    return VoxelFit(cbv=cbv, cbf=cbf, mtt=mtt, delay=delay, ttp=ttp, rss=float(residual @ residual), status=status)


def svd_deconvolve(tac: Curve, aif: Curve, threshold_frac=None, unit_k=None):
    """Return (IRF estimate over the padded 2·nt lag window, VoxelFit)."""
    if not tac.same_grid(aif):
        raise GridMismatchError("tac and aif must share one time grid")
    threshold_frac = svd_threshold_default() if threshold_frac is None else float(threshold_frac)
    unit_k = unit_constant() if unit_k is None else float(unit_k)
    matrix = circulant_matrix(aif.samples, aif.dt)
    pinv = truncated_pseudo_inverse(matrix, threshold_frac)
    padded = np.zeros(2 * tac.nt)
    padded[:tac.nt] = tac.samples
    irf = pinv @ padded
    fit = _params_from_irf(irf, tac.samples, matrix @ irf, aif.dt, aif.t0, unit_k)
    return Curve(samples=irf, dt=aif.dt, t0=0.0), fit


def fit_volume_svd(vol: TimeSeriesVolume, aif: Curve, mask: BinaryMask = None, threshold_frac=None, unit_k=None) -> dict:
    """SVD baseline maps for every masked voxel, zeros elsewhere."""
    if aif.nt != vol.nt or aif.dt != vol.dt:
        raise GridMismatchError("AIF grid differs from volume grid")
    if mask is None:
        mask = BinaryMask(data=np.ones(vol.spatial_shape, dtype=bool), spacing=vol.spacing)
    if tuple(mask.data.shape) != tuple(vol.spatial_shape):
        raise ShapeMismatchError(f"mask dims {mask.dims} do not match volume")
    if mask.is_empty():
        raise EmptyMaskError("fit mask is empty")
    threshold_frac = svd_threshold_default() if threshold_frac is None else float(threshold_frac)
    unit_k = unit_constant() if unit_k is None else float(unit_k)

    matrix = circulant_matrix(aif.samples, aif.dt)
    pinv = truncated_pseudo_inverse(matrix, threshold_frac)
    index = np.flatnonzero(mask.data.reshape(-1))
    curves = enhancement(vol.voxel_curves()[index])
    padded = np.zeros((curves.shape[0], 2 * vol.nt))
    padded[:, :vol.nt] = curves
    irfs = padded @ pinv.T
    reconvolved = irfs @ matrix.T

    n_vox = int(np.prod(vol.spatial_shape))
    values = {kind: np.zeros(n_vox) for kind in MAP_KINDS}
    for row, slot in enumerate(index):
        fit = _params_from_irf(irfs[row], curves[row], reconvolved[row], vol.dt, vol.t0, unit_k)
        for kind in MAP_KINDS:
            values[kind][slot] = getattr(fit, kind.value.lower())
    logger.info(f"📉 SVD baseline over {index.size} voxels (threshold {threshold_frac})")
    return {
        kind: ParametricMap(kind=kind, data=data.reshape(vol.spatial_shape), spacing=vol.spacing)
        for kind, data in values.items()
    }
