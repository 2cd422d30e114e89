"""
🧹 PREPROCESS

Rigid (translation) motion correction and per-frame bilateral filtering.
"""

from .bilateral import BilateralConfig, bilateral_filter, estimate_noise_sigma, filter_timeseries
from .registration import (
    FLAG_NO_TEXTURE,
    FLAG_OK,
    MotionCorrector,
    ShiftLog,
    default_reference_index,
    estimate_shift,
    register_timeseries,
    shift_frame,
    shift_frame_subpixel,
    write_shift_log,
)

__all__ = [
    "BilateralConfig",
    "bilateral_filter",
    "estimate_noise_sigma",
    "filter_timeseries",
    "FLAG_NO_TEXTURE",
    "FLAG_OK",
    "MotionCorrector",
    "ShiftLog",
    "default_reference_index",
    "estimate_shift",
    "register_timeseries",
    "shift_frame",
    "shift_frame_subpixel",
    "write_shift_log",
]
