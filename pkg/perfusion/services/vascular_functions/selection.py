"""
🩸 AIF / VOF SELECTION

Scores every voxel inside the brain mask from its enhancement curve and
averages the top-n curves.

- AIF score: peak / (fwhm · (ttp + dt)), high, early and narrow wins;
  ties go to the earlier ttp, then to the lower voxel index
- VOF score: area under the enhancement curve; ties go to the later ttp,
  then to the lower voxel index

Scores within 1e-9 (relative to the best score) rank as equal.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from perfusion.conf import perfusion_section
from perfusion.exceptions import (
    ArtifactIOError,
    InsufficientCandidatesError,
    InvariantViolationError,
    ZeroAreaError,
)
from perfusion.services.volume_model import BinaryMask, Curve, TimeSeriesVolume

from .features import enhancement, feature_table

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9


def _quantized(scores):
    top = np.abs(scores).max() if scores.size else 0.0
    if top == 0:
        return np.zeros(scores.shape, dtype=np.int64)
    return np.round(scores / top / TIE_TOLERANCE).astype(np.int64)


def _candidate_index(vol: TimeSeriesVolume, mask: BinaryMask = None):
    if mask is None:
        return np.arange(int(np.prod(vol.spatial_shape)))
    if tuple(mask.data.shape) != tuple(vol.spatial_shape):
        raise InvariantViolationError(f"mask dims {mask.dims} do not match volume {vol.dims[:3]}")
    return np.flatnonzero(mask.data.reshape(-1))


def _voxel_table(vol: TimeSeriesVolume, chosen, scores):
    nz, ny, nx = vol.spatial_shape
    z, rem = np.divmod(chosen, ny * nx)
    y, x = np.divmod(rem, nx)
    return pd.DataFrame({"x": x, "y": y, "z": z, "score": scores})


def _select(vol, mask, n, kind):
    index = _candidate_index(vol, mask)
    curves = vol.voxel_curves()[index]
    table = feature_table(curves, vol.dt, vol.t0)
    scorable = ~table["flagged"]

    if kind == "aif":
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = table["peak"] / (table["fwhm"] * (table["ttp"] + vol.dt))
        scorable &= np.isfinite(scores) & (table["fwhm"] > 0)
    else:
        scores = table["auc"]
        scorable &= np.isfinite(scores)

    found = int(scorable.sum())
    if found < n:
        raise InsufficientCandidatesError(found, n)

    index, curves, scores = index[scorable], curves[scorable], scores[scorable]
    ttp = table["ttp"][scorable]
    quantized = _quantized(scores)
    # lexsort: last key is primary
    if kind == "aif":
        order = np.lexsort((index, ttp, -quantized))
    else:
        order = np.lexsort((index, -ttp, -quantized))
    top = order[:n]

    mean_curve = enhancement(curves[top]).mean(axis=0)
    curve = Curve(samples=mean_curve, dt=vol.dt, t0=vol.t0)
    return curve, _voxel_table(vol, index[top], scores[top])


def select_aif(vol: TimeSeriesVolume, brain_mask: BinaryMask = None, n=100):
    """Return (AIF enhancement curve, chosen voxels as a DataFrame x, y, z, score)."""
    return _select(vol, brain_mask, int(n), "aif")


def select_vof(vol: TimeSeriesVolume, brain_mask: BinaryMask = None, n=100) -> Curve:
    curve, _ = _select(vol, brain_mask, int(n), "vof")
    return curve


def select_vof_with_voxels(vol: TimeSeriesVolume, brain_mask: BinaryMask = None, n=100):
    return _select(vol, brain_mask, int(n), "vof")


def _positive_area(curve: Curve):
    return float(trapezoid(np.clip(curve.samples, 0.0, None), dx=curve.dt))


def pvc_scale_aif(aif: Curve, vof: Curve) -> Curve:
    """Scale the AIF so its area matches the VOF area (partial-volume correction)."""
    aif_area = _positive_area(aif)
    if aif_area <= 0:
        raise ZeroAreaError("AIF has zero area, cannot scale")
    vof_area = _positive_area(vof)
    if vof_area <= 0:
        raise ZeroAreaError("VOF has zero area, cannot scale")
    factor = vof_area / aif_area
    logger.info(f"🩸 Partial-volume scale factor {factor:.4f}")
    return aif.with_samples(aif.samples * factor)


def write_voxel_list(voxels: pd.DataFrame, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        voxels[["x", "y", "z", "score"]].to_csv(path, index=False)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write voxel list: {exc}", path) from exc


class VascularFunctionExtractor:
    """🩸 AIF and VOF extraction with optional partial-volume correction."""

    def __init__(self, aif_voxels=None, vof_voxels=None, pvc=None):
        self.service_name = "Vascular Function Extractor"
        section = perfusion_section("vascular")
        self.aif_voxels = int(aif_voxels if aif_voxels is not None else section.get("aif_voxels", 100))
        self.vof_voxels = int(vof_voxels if vof_voxels is not None else section.get("vof_voxels", 100))
        self.pvc = bool(pvc if pvc is not None else section.get("pvc", False))

    def extract(self, vol: TimeSeriesVolume, brain_mask: BinaryMask = None) -> dict:
        """Return a dict with aif, vof, aif_voxels, vof_voxels and the (possibly scaled) fit_aif."""
        aif, aif_voxels = select_aif(vol, brain_mask, self.aif_voxels)
        vof, vof_voxels = select_vof_with_voxels(vol, brain_mask, self.vof_voxels)
        fit_aif = pvc_scale_aif(aif, vof) if self.pvc else aif
        logger.info(f"🩸 AIF selected from {len(aif_voxels)} voxels, VOF from {len(vof_voxels)} voxels")
        return {
            "aif": aif,
            "vof": vof,
            "fit_aif": fit_aif,
            "aif_voxels": aif_voxels,
            "vof_voxels": vof_voxels,
        }
