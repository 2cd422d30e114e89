import numpy as np

from perfusion.conf import perfusion_section
from perfusion.exceptions import NormalizationError

from .types import MapKind, ParametricMap

# physical range per kind, never fitted to data
DEFAULT_NORM_RANGES = {
    MapKind.CBV: (0.0, 8.0),
    MapKind.CBF: (0.0, 100.0),
    MapKind.MTT: (0.0, 20.0),
    MapKind.TTP: (0.0, 40.0),
    MapKind.DELAY: (0.0, 10.0),
}


def default_norm_range(kind):
    kind = MapKind(kind)
    configured = perfusion_section("normalization").get(kind.value)
    lo, hi = configured if configured is not None else DEFAULT_NORM_RANGES[kind]
    return float(lo), float(hi)


def _check_range(norm_range):
    lo, hi = (float(v) for v in norm_range)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise NormalizationError(f"normalization range needs hi > lo, got ({lo}, {hi})")
    return lo, hi


def normalize_map(pmap: ParametricMap, norm_range=None) -> ParametricMap:
    """Map values onto [0, 1] with clamping; the range is recorded on the result."""
    lo, hi = _check_range(norm_range if norm_range is not None else default_norm_range(pmap.kind))
    if pmap.norm_range is not None:
        if pmap.norm_range == (lo, hi):
            return pmap
        pmap = denormalize_map(pmap)
    scaled = np.clip((pmap.data.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return ParametricMap(kind=pmap.kind, data=scaled, spacing=pmap.spacing, norm_range=(lo, hi))


def denormalize_map(pmap: ParametricMap) -> ParametricMap:
    if pmap.norm_range is None:
        raise NormalizationError(f"{pmap.kind.value} map carries no norm_range")
    lo, hi = pmap.norm_range
    values = pmap.data.astype(np.float64) * (hi - lo) + lo
    return ParametricMap(kind=pmap.kind, data=values, spacing=pmap.spacing)
