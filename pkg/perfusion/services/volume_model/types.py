"""
🧱 CORE DATA TYPES

Shared by every service of the toolkit. All arrays are stored in C order with
x varying fastest:

- TimeSeriesVolume.data: (nt, nz, ny, nx) in HU
- ParametricMap.data / BinaryMask.data: (nz, ny, nx)

Instances are immutable: arrays are copied on construction and flagged
read-only.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from perfusion.exceptions import InvariantViolationError, ShapeMismatchError


class MapKind(str, Enum):
    CBV = "CBV"
    CBF = "CBF"
    MTT = "MTT"
    TTP = "TTP"
    DELAY = "DELAY"


MAP_UNITS = {
    MapKind.CBV: "ml/100g",
    MapKind.CBF: "ml/100g/min",
    MapKind.MTT: "s",
    MapKind.TTP: "s",
    MapKind.DELAY: "s",
}


def _frozen_array(values, dtype):
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def _check_spacing(spacing):
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise InvariantViolationError(f"spacing must be three positive values, got {spacing}")
    return spacing


@dataclass(frozen=True, eq=False)
class TimeSeriesVolume:
    """4-D contrast-enhancement record in HU."""

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    dt: float = 0.5
    t0: float = 0.0

    def __post_init__(self):
        data = _frozen_array(self.data, np.float32)
        if data.ndim != 4:
            raise InvariantViolationError(f"volume data must be 4-D (nt, nz, ny, nx), got {data.shape}")
        if data.shape[0] < 2 or min(data.shape) < 1:
            raise InvariantViolationError(f"volume needs nt >= 2 and non-empty dims, got {data.shape}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvariantViolationError(f"dt must be > 0, got {self.dt}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def dims(self):
        nt, nz, ny, nx = self.data.shape
        return (nx, ny, nz, nt)

    @property
    def nt(self):
        return self.data.shape[0]

    @property
    def spatial_shape(self):
        return self.data.shape[1:]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    def is_finite(self):
        return bool(np.isfinite(self.data).all())

    def voxel_curves(self):
        """Return (n_voxels, nt) float64 array, voxels in x-fastest order."""
        return self.data.reshape(self.nt, -1).T.astype(np.float64)

    def with_data(self, data):
        return TimeSeriesVolume(data=data, spacing=self.spacing, dt=self.dt, t0=self.t0)

    def __eq__(self, other):
        if not isinstance(other, TimeSeriesVolume):
            return NotImplemented
        return (
            self.data.shape == other.data.shape
            and self.spacing == other.spacing
            and self.dt == other.dt
            and self.t0 == other.t0
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Curve:
    """Uniformly sampled 1-D time signal (AIF, VOF, TAC or IRF)."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        samples = _frozen_array(self.samples, np.float64)
        if samples.ndim != 1 or samples.size < 2:
            raise InvariantViolationError("a curve needs at least two samples")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvariantViolationError(f"dt must be > 0, got {self.dt}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def nt(self):
        return self.samples.size

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    def same_grid(self, other):
        return self.nt == other.nt and self.dt == other.dt and self.t0 == other.t0

    def with_samples(self, samples):
        return Curve(samples=samples, dt=self.dt, t0=self.t0)

    def __eq__(self, other):
        if not isinstance(other, Curve):
            return NotImplemented
        return self.same_grid(other) and np.array_equal(self.samples, other.samples)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ParametricMap:
    """One scalar perfusion map with physical units and normalization metadata."""

    kind: MapKind
    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    norm_range: Optional[Tuple[float, float]] = None
    units: str = field(init=False)

    def __post_init__(self):
        kind = MapKind(self.kind)
        data = _frozen_array(self.data, np.float32)
        if data.ndim != 3:
            raise InvariantViolationError(f"map data must be 3-D (nz, ny, nx), got {data.shape}")
        if not np.isfinite(data).all():
            raise InvariantViolationError(f"{kind.value} map contains non-finite values")
        if (data < 0).any():
            raise InvariantViolationError(f"{kind.value} map contains negative values")
        norm_range = self.norm_range
        if norm_range is not None:
            norm_range = (float(norm_range[0]), float(norm_range[1]))
            if (data > 1).any():
                raise InvariantViolationError(f"normalized {kind.value} map exceeds 1")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        object.__setattr__(self, "norm_range", norm_range)
        object.__setattr__(self, "units", "1" if norm_range else MAP_UNITS[kind])

    @property
    def dims(self):
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    def __eq__(self, other):
        if not isinstance(other, ParametricMap):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.spacing == other.spacing
            and self.norm_range == other.norm_range
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Voxel mask with the geometry of the map it was derived from."""

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        raw = np.asarray(self.data)
        if raw.ndim != 3:
            raise InvariantViolationError(f"mask data must be 3-D (nz, ny, nx), got {raw.shape}")
        if raw.dtype != bool and not np.isin(raw, (0, 1)).all():
            raise InvariantViolationError("mask values must be 0 or 1")
        object.__setattr__(self, "data", _frozen_array(raw.astype(bool), bool))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self):
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def count(self):
        return int(self.data.sum())

    def is_empty(self):
        return not self.data.any()

    def require_same_geometry(self, other):
        if self.data.shape != other.data.shape:
            raise ShapeMismatchError(f"mask dims {self.dims} do not match {other.dims}")

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.data, other.data)

    __hash__ = None
