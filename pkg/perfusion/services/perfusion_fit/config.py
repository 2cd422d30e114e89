from dataclasses import dataclass
from typing import Tuple

import numpy as np

from perfusion.conf import perfusion_section
from perfusion.exceptions import InvariantViolationError
from perfusion.services.volume_model import MapKind

MAP_KINDS = (MapKind.CBV, MapKind.CBF, MapKind.MTT, MapKind.TTP, MapKind.DELAY)


def log_mtt_grid(mtt_min=1.0, mtt_max=24.0, points=24):
    return tuple(float(v) for v in np.geomspace(mtt_min, mtt_max, int(points)))


def uniform_delay_grid(delay_max, dt):
    count = int(np.floor(delay_max / dt + 1e-9)) + 1
    return tuple(float(v) for v in dt * np.arange(count))


@dataclass(frozen=True)
class FitConfig:
    """Search grids and refinement controls for the box-IRF regression."""

    mtt_grid: Tuple[float, ...] = log_mtt_grid()
    delay_grid: Tuple[float, ...] = uniform_delay_grid(10.0, 0.5)
    refine: bool = True
    max_refine_iters: int = 20
    refine_tolerance: float = 1e-6
    nonneg: bool = True
    zero_signal_factor: float = 3.0
    ttp_raw: bool = False

    def __post_init__(self):
        for name in ("mtt_grid", "delay_grid"):
            grid = np.asarray(getattr(self, name), dtype=np.float64)
            if grid.ndim != 1 or grid.size == 0:
                raise InvariantViolationError(f"{name} must be a non-empty 1-D grid")
            if (np.diff(grid) <= 0).any():
                raise InvariantViolationError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, tuple(float(v) for v in grid))
        if self.mtt_grid[0] <= 0:
            raise InvariantViolationError("mtt grid must be > 0")
        if self.delay_grid[0] < 0:
            raise InvariantViolationError("delay grid must be >= 0")
        if int(self.max_refine_iters) < 0:
            raise InvariantViolationError("max_refine_iters must be >= 0")

    def check_window(self, nt, dt):
        """Both grids must lie inside [0, nt·dt)."""
        duration = nt * dt
        if self.mtt_grid[-1] >= duration or self.delay_grid[-1] >= duration:
            raise InvariantViolationError(f"fit grids exceed the {duration:g} s acquisition window")

    @property
    def mtt_ratio(self):
        if len(self.mtt_grid) < 2:
            return 1.0
        return float(np.max(np.asarray(self.mtt_grid[1:]) / np.asarray(self.mtt_grid[:-1])))

    @classmethod
    def from_settings(cls, dt=0.5, **overrides):
        section = perfusion_section("fit")
        values = {
            "mtt_grid": log_mtt_grid(
                section.get("mtt_min", 1.0), section.get("mtt_max", 24.0), section.get("mtt_points", 24)
            ),
            "delay_grid": uniform_delay_grid(section.get("delay_max", 10.0), dt),
        }
        for key in ("refine", "max_refine_iters", "zero_signal_factor", "ttp_raw"):
            if key in section:
                values[key] = section[key]
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def svd_threshold_default():
    return float(perfusion_section("fit").get("svd_threshold_frac", 0.2))
