"""
🩸 VASCULAR FUNCTIONS

Automatic arterial input and venous output function extraction.
"""

from .features import BASELINE_FRAMES, CurveFeatures, curve_features, enhancement, feature_table
from .selection import (
    VascularFunctionExtractor,
    pvc_scale_aif,
    select_aif,
    select_vof,
    select_vof_with_voxels,
    write_voxel_list,
)

__all__ = [
    "BASELINE_FRAMES",
    "CurveFeatures",
    "curve_features",
    "enhancement",
    "feature_table",
    "VascularFunctionExtractor",
    "pvc_scale_aif",
    "select_aif",
    "select_vof",
    "select_vof_with_voxels",
    "write_voxel_list",
]
