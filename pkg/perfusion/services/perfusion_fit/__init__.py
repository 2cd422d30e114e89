"""
⚙️ PERFUSION FIT

Box-IRF model regression per voxel and per volume, plus a truncated-SVD
deconvolution baseline.
"""

from .config import MAP_KINDS, FitConfig, log_mtt_grid, svd_threshold_default, uniform_delay_grid
from .voxel import STATUS_CODES, FitBasis, FitStatus, VoxelFit, fit_samples, fit_voxel, model_tac, noise_floor
from .volume import CHUNK_SIZE, FitResult, fit_volume, write_maps, write_summary
from .svd import circulant_matrix, fit_volume_svd, svd_deconvolve, truncated_pseudo_inverse

__all__ = [
    "MAP_KINDS",
    "FitConfig",
    "log_mtt_grid",
    "svd_threshold_default",
    "uniform_delay_grid",
    "STATUS_CODES",
    "FitBasis",
    "FitStatus",
    "VoxelFit",
    "fit_samples",
    "fit_voxel",
    "model_tac",
    "noise_floor",
    "CHUNK_SIZE",
    "FitResult",
    "fit_volume",
    "write_maps",
    "write_summary",
    "circulant_matrix",
    "fit_volume_svd",
    "svd_deconvolve",
    "truncated_pseudo_inverse",
]
