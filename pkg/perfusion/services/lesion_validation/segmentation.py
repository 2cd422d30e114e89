"""
✂️ THRESHOLD SEGMENTATION

Core and penumbra masks from CBV/CBF/TTP maps under one fixed rule, applied
identically to reference and test maps.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from perfusion.conf import perfusion_section
from perfusion.exceptions import InvariantViolationError, ShapeMismatchError
from perfusion.services.volume_model import BinaryMask, MapKind

logger = logging.getLogger(__name__)

REQUIRED_KINDS = (MapKind.CBV, MapKind.CBF, MapKind.TTP)


@dataclass(frozen=True)
class SegmentationThresholds:
    core_cbv_max: float = 1.5
    core_cbf_fraction: float = 0.3
    penumbra_ttp_delta_s: float = 4.0
    penumbra_cbf_fraction: Optional[float] = None
    min_component: int = 5

    def __post_init__(self):
        for name in ("core_cbv_max", "core_cbf_fraction", "penumbra_ttp_delta_s"):
            if not getattr(self, name) > 0:
                raise InvariantViolationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.penumbra_cbf_fraction is not None and not self.penumbra_cbf_fraction > 0:
            raise InvariantViolationError(f"penumbra_cbf_fraction must be positive, got {self.penumbra_cbf_fraction}")
        if int(self.min_component) < 1:
            raise InvariantViolationError(f"min_component must be >= 1, got {self.min_component}")

    @classmethod
    def from_settings(cls, **overrides):
        values = {key: value for key, value in perfusion_section("segmentation").items()
                  if key in cls.__dataclass_fields__}
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def as_dict(self):
        return asdict(self)


def _map_data(maps, kind):
    for key, pmap in maps.items():
        if MapKind(key) == kind:
            return np.asarray(pmap.data, dtype=np.float64), pmap.spacing
    raise InvariantViolationError(f"segmentation needs a {kind.value} map")


def remove_small_components(mask: np.ndarray, min_size: int) -> np.ndarray:
    """Drop face-connected components smaller than `min_size` voxels."""
    if min_size <= 1 or not mask.any():
        return mask.copy()
    labelled, count = ndimage.label(mask)
    sizes = np.bincount(labelled.reshape(-1), minlength=count + 1)
    keep = sizes >= min_size
    keep[0] = False
    return keep[labelled]


def healthy_reference(ttp: np.ndarray, brain: np.ndarray, delta_s: float) -> np.ndarray:
    """Brain voxels outside the TTP-delayed region."""
    if not brain.any():
        return brain.copy()
    delayed = ttp > np.median(ttp[brain]) + delta_s
    return brain & ~delayed


def segment(maps: dict, brain_mask: BinaryMask, thr: SegmentationThresholds = None):
    """
    Return (core, penumbra) masks.

    core     = CBV < core_cbv_max and CBF < core_cbf_fraction·median healthy CBF
    penumbra = TTP > median healthy TTP + penumbra_ttp_delta_s, minus core

    Both are restricted to the brain mask and cleaned of components smaller
    than `min_component` voxels.
    """
    thr = thr or SegmentationThresholds.from_settings()
    cbv, spacing = _map_data(maps, MapKind.CBV)
    cbf, _ = _map_data(maps, MapKind.CBF)
    ttp, _ = _map_data(maps, MapKind.TTP)
    brain = np.asarray(brain_mask.data, dtype=bool)
    for name, array in (("CBF", cbf), ("TTP", ttp), ("brain mask", brain)):
        if array.shape != cbv.shape:
            raise ShapeMismatchError(f"{name} shape {array.shape} differs from CBV shape {cbv.shape}")

    healthy = healthy_reference(ttp, brain, thr.penumbra_ttp_delta_s)
    empty = np.zeros_like(brain)
    if not healthy.any():
        logger.warning("⚠️ No healthy reference tissue in the brain mask, masks left empty")
        return BinaryMask(data=empty, spacing=spacing), BinaryMask(data=empty, spacing=spacing)
    cbf_ref = float(np.median(cbf[healthy]))
    ttp_ref = float(np.median(ttp[healthy]))

    core = brain & (cbv < thr.core_cbv_max) & (cbf < thr.core_cbf_fraction * cbf_ref)
    core = remove_small_components(core, int(thr.min_component))

    penumbra = brain & (ttp > ttp_ref + thr.penumbra_ttp_delta_s) & ~core
    if thr.penumbra_cbf_fraction is not None:
        penumbra &= cbf < thr.penumbra_cbf_fraction * cbf_ref
    penumbra = remove_small_components(penumbra, int(thr.min_component))

    logger.debug(f"✂️ Segmented core={int(core.sum())} penumbra={int(penumbra.sum())} voxels")
    return BinaryMask(data=core, spacing=spacing), BinaryMask(data=penumbra, spacing=spacing)
