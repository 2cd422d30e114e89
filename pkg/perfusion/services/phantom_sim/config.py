from dataclasses import dataclass, field, fields
from typing import List, Tuple

from perfusion.conf import perfusion_section, perfusion_settings
from perfusion.exceptions import InvariantViolationError


def _known(cls, values):
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in values.items() if k in names}


@dataclass(frozen=True)
class AcquisitionConfig:
    """Scan timing. Defaults give 89 frames over 44.5 s."""

    nt: int = 89
    dt: float = 0.5
    baseline_hu: float = 35.0
    t0: float = 0.0

    def __post_init__(self):
        if int(self.nt) < 8:
            raise InvariantViolationError(f"acquisition needs nt >= 8, got {self.nt}")
        if not self.dt > 0:
            raise InvariantViolationError(f"dt must be > 0, got {self.dt}")

    @property
    def duration(self):
        return self.nt * self.dt

    @classmethod
    def from_settings(cls, **overrides):
        values = _known(cls, perfusion_section("acquisition"))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class GammaVariateParams:
    """Peak-normalized gamma-variate bolus; maximum is `amplitude` at onset + alpha*beta."""

    amplitude: float = 500.0
    onset: float = 5.0
    alpha: float = 3.0
    beta: float = 1.0
    recirculation_fraction: float = 0.0
    recirculation_delay: float = 8.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise InvariantViolationError(f"bolus amplitude must be > 0, got {self.amplitude}")
        if not (self.alpha > 0 and self.beta > 0):
            raise InvariantViolationError("bolus shape alpha and scale beta must be > 0")
        if not 0.0 <= self.recirculation_fraction < 1.0:
            raise InvariantViolationError("recirculation_fraction must lie in [0, 1)")

    @property
    def peak_time(self):
        return self.onset + self.alpha * self.beta

    @classmethod
    def from_settings(cls, **overrides):
        values = _known(cls, perfusion_section("bolus"))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class NoiseMotionConfig:
    noise_sigma_hu: float = 0.0
    max_shift_px: int = 0
    shift_schedule: Tuple[Tuple[int, int], ...] = field(default_factory=tuple)
    rng_seed: int = 0

    def __post_init__(self):
        if self.noise_sigma_hu < 0:
            raise InvariantViolationError("noise_sigma_hu must be >= 0")
        if int(self.max_shift_px) < 0:
            raise InvariantViolationError("max_shift_px must be >= 0")
        schedule = tuple((int(dx), int(dy)) for dx, dy in self.shift_schedule)
        limit = int(self.max_shift_px)
        if any(abs(dx) > limit or abs(dy) > limit for dx, dy in schedule):
            raise InvariantViolationError(f"shift schedule exceeds max_shift_px={limit}")
        object.__setattr__(self, "shift_schedule", schedule)

    @classmethod
    def from_settings(cls, **overrides):
        values = _known(cls, perfusion_section("noise_motion"))
        values.setdefault("rng_seed", perfusion_settings().get("seed", 0))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def vein_delay_default():
    return float(perfusion_settings().get("vein_delay_s", 2.0))


def as_dict(config) -> dict:
    """Plain JSON-able view of a config dataclass."""
    out = {}
    for f in fields(config):
        value = getattr(config, f.name)
        out[f.name] = [list(v) for v in value] if f.name == "shift_schedule" else value
    return out


def schedule_from_list(values: List) -> Tuple[Tuple[int, int], ...]:
    return tuple((int(dx), int(dy)) for dx, dy in values)
