"""
🧱 VOLUME MODEL

Core data types, unit conventions, normalization and bit-exact file I/O
shared by every other service.
"""

from .types import MAP_UNITS, BinaryMask, Curve, MapKind, ParametricMap, TimeSeriesVolume
from .normalization import DEFAULT_NORM_RANGES, default_norm_range, denormalize_map, normalize_map
from .io import (
    read_curve,
    read_labels,
    read_map,
    read_mask,
    read_volume,
    write_curve,
    write_map,
    write_mask,
    write_volume,
)

__all__ = [
    "MAP_UNITS",
    "BinaryMask",
    "Curve",
    "MapKind",
    "ParametricMap",
    "TimeSeriesVolume",
    "DEFAULT_NORM_RANGES",
    "default_norm_range",
    "denormalize_map",
    "normalize_map",
    "read_curve",
    "read_labels",
    "read_map",
    "read_mask",
    "read_volume",
    "write_curve",
    "write_map",
    "write_mask",
    "write_volume",
]
