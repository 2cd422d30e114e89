"""
🎯 RIGID MOTION CORRECTION

Translation-only registration of every frame of a time series onto one
reference frame, scored by normalized cross-correlation over the overlap of
the two frames. Out-of-frame pixels are zero-filled.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage

from perfusion.conf import perfusion_section
from perfusion.exceptions import ArtifactIOError, InvariantViolationError, NoTextureError, ShapeMismatchError
from perfusion.services.volume_model import TimeSeriesVolume

logger = logging.getLogger(__name__)

FLAG_OK = "ok"
FLAG_NO_TEXTURE = "no_texture"

# NCC values closer than this are considered tied
_NCC_DECIMALS = 12


def shift_frame(frame, dx, dy):
    """Translate a 2-D frame so that out[y + dy, x + dx] = frame[y, x]; vacated pixels are 0."""
    frame = np.asarray(frame)
    dx, dy = int(dx), int(dy)
    ny, nx = frame.shape
    out = np.zeros_like(frame)
    if abs(dx) >= nx or abs(dy) >= ny:
        return out
    out[max(dy, 0):ny + min(dy, 0), max(dx, 0):nx + min(dx, 0)] = \
        frame[max(-dy, 0):ny - max(dy, 0), max(-dx, 0):nx - max(dx, 0)]
    return out


def shift_frame_subpixel(frame, dx, dy):
    """Fractional translation with bilinear interpolation and zero fill."""
    return ndimage.shift(np.asarray(frame, dtype=np.float64), (dy, dx), order=1, mode="constant", cval=0.0)


def _ncc(a, b):
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom <= 0:
        return -np.inf
    return float((a * b).sum() / denom)


def _overlap_ncc(frame, reference, dx, dy):
    """NCC between shift_frame(frame, dx, dy) and reference, restricted to pixels the shift keeps."""
    ny, nx = frame.shape
    ys, ye = max(dy, 0), ny + min(dy, 0)
    xs, xe = max(dx, 0), nx + min(dx, 0)
    moved = frame[ys - dy:ye - dy, xs - dx:xe - dx]
    return _ncc(moved, reference[ys:ye, xs:xe])


def _parabolic_offset(c_minus, c_zero, c_plus):
    curvature = c_minus - 2.0 * c_zero + c_plus
    if not np.isfinite(curvature) or curvature >= 0:
        return 0.0
    return float(np.clip(0.5 * (c_minus - c_plus) / curvature, -0.5, 0.5))


def estimate_shift(frame, reference, max_shift=10, subpixel=False):
    """
    Return the integer (dx, dy) that best aligns `frame` onto `reference`.

    The returned shift is the correction: shift_frame(frame, dx, dy) matches
    the reference. A frame displaced by (+3, -2) yields (-3, +2). Ties go to
    the smallest shift norm, then to the lexicographically smallest (dx, dy).
    With `subpixel`, a parabolic fit through the neighbouring scores adds a
    fractional part and (dx, dy, fx, fy) is returned.
    """
    frame = np.asarray(frame, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if frame.shape != reference.shape or frame.ndim != 2:
        raise ShapeMismatchError(f"frame {frame.shape} and reference {reference.shape} must be equal 2-D shapes")
    ny, nx = frame.shape
    if ny < 8 or nx < 8:
        raise InvariantViolationError(f"registration needs frames of at least 8x8, got {frame.shape}")
    if np.ptp(frame) == 0 or np.ptp(reference) == 0:
        raise NoTextureError()

    limit_x = min(int(max_shift), nx - 4)
    limit_y = min(int(max_shift), ny - 4)
    scores = {}
    best_key, best = None, None
    for dx in range(-limit_x, limit_x + 1):
        for dy in range(-limit_y, limit_y + 1):
            score = _overlap_ncc(frame, reference, dx, dy)
            scores[(dx, dy)] = score
            key = (-round(score, _NCC_DECIMALS), dx * dx + dy * dy, dx, dy)
            if best_key is None or key < best_key:
                best_key, best = key, (dx, dy)

    if not np.isfinite(scores[best]):
        raise NoTextureError()
    if not subpixel:
        return best

    dx, dy = best
    c0 = scores[best]
    fx = _parabolic_offset(scores.get((dx - 1, dy), -np.inf), c0, scores.get((dx + 1, dy), -np.inf))
    fy = _parabolic_offset(scores.get((dx, dy - 1), -np.inf), c0, scores.get((dx, dy + 1), -np.inf))
    return dx, dy, fx, fy


@dataclass(frozen=True)
class ShiftLog:
    """Per-frame applied corrections; the reference frame always carries (0, 0)."""

    shifts: Tuple[Tuple[int, int], ...]
    reference_index: int
    flags: Tuple[str, ...] = field(default_factory=tuple)
    subpixel: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        shifts = tuple((int(dx), int(dy)) for dx, dy in self.shifts)
        flags = tuple(self.flags) or (FLAG_OK,) * len(shifts)
        if len(flags) != len(shifts):
            raise InvariantViolationError("shift log needs one flag per frame")
        if not 0 <= self.reference_index < len(shifts):
            raise InvariantViolationError(f"reference index {self.reference_index} out of range")
        if shifts[self.reference_index] != (0, 0):
            raise InvariantViolationError("reference frame must carry a zero shift")
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "flags", flags)

    def __len__(self):
        return len(self.shifts)

    @property
    def flagged_frames(self):
        return [i for i, flag in enumerate(self.flags) if flag != FLAG_OK]

    def to_frame(self) -> pd.DataFrame:
        table = pd.DataFrame({
            "frame": np.arange(len(self.shifts)),
            "dx": [s[0] for s in self.shifts],
            "dy": [s[1] for s in self.shifts],
            "flag": list(self.flags),
        })
        if self.subpixel is not None:
            table["fx"] = [s[0] for s in self.subpixel]
            table["fy"] = [s[1] for s in self.subpixel]
        return table


def write_shift_log(log: ShiftLog, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        log.to_frame().to_csv(path, index=False)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write shift log: {exc}", path) from exc


def _projection(frames):
    """Collapse (nz, ny, nx) into one 2-D frame; in-plane motion is shared by all slices."""
    return frames.astype(np.float64).mean(axis=0)


def default_reference_index(vol: TimeSeriesVolume) -> int:
    """Frame with the largest spatial variance, first one on ties."""
    variances = [float(_projection(vol.data[t]).var()) for t in range(vol.nt)]
    return int(np.argmax(variances))


class MotionCorrector:
    """🎯 Registers every frame of a volume to a reference frame."""

    def __init__(self, max_shift=None, subpixel=None):
        self.service_name = "Motion Corrector"
        section = perfusion_section("registration")
        self.max_shift = int(max_shift if max_shift is not None else section.get("max_shift_px", 10))
        self.subpixel = bool(subpixel if subpixel is not None else section.get("subpixel", False))

    def register(self, vol: TimeSeriesVolume, reference_index=None):
        if reference_index is None:
            reference_index = default_reference_index(vol)
        if not 0 <= int(reference_index) < vol.nt:
            raise InvariantViolationError(f"reference_index must be < nt={vol.nt}, got {reference_index}")
        reference_index = int(reference_index)

        reference = _projection(vol.data[reference_index])
        data = np.array(vol.data, copy=True)
        shifts, flags, fractions = [], [], []

        for t in range(vol.nt):
            if t == reference_index:
                shifts.append((0, 0))
                flags.append(FLAG_OK)
                fractions.append((0.0, 0.0))
                continue
            try:
                estimate = estimate_shift(_projection(vol.data[t]), reference, self.max_shift, self.subpixel)
            except NoTextureError:
                logger.warning(f"⚠️ Frame {t} has no texture, left unshifted")
                shifts.append((0, 0))
                flags.append(FLAG_NO_TEXTURE)
                fractions.append((0.0, 0.0))
                continue

            dx, dy = estimate[:2]
            fx, fy = estimate[2:] if self.subpixel else (0.0, 0.0)
            shifts.append((dx, dy))
            flags.append(FLAG_OK)
            fractions.append((fx, fy))
            if (dx, dy, fx, fy) == (0, 0, 0.0, 0.0):
                continue
            for z in range(data.shape[1]):
                if fx or fy:
                    data[t, z] = shift_frame_subpixel(vol.data[t, z], dx + fx, dy + fy)
                else:
                    data[t, z] = shift_frame(vol.data[t, z], dx, dy)

        log = ShiftLog(
            shifts=tuple(shifts),
            reference_index=reference_index,
            flags=tuple(flags),
            subpixel=tuple(fractions) if self.subpixel else None,
        )
        moved = sum(1 for s in log.shifts if s != (0, 0))
        logger.info(f"🎯 Registered {vol.nt} frames to frame {reference_index}, {moved} moved, {len(log.flagged_frames)} flagged")
        return vol.with_data(data), log


def register_timeseries(vol: TimeSeriesVolume, reference_index=None, max_shift=None, subpixel=None):
    """Return (registered volume, ShiftLog); a motion-free volume comes back bit-identical."""
    return MotionCorrector(max_shift=max_shift, subpixel=subpixel).register(vol, reference_index)
