"""
🧪 PHANTOM SIMULATION

Synthetic CTP time series with known ground-truth hemodynamics.
"""

from .config import AcquisitionConfig, GammaVariateParams, NoiseMotionConfig, as_dict, schedule_from_list
from .curves import (
    TimeGrid,
    box_coverage,
    box_irf,
    convolve_causal,
    delayed_equal_area_copy,
    gamma_variate,
    synth_tac,
    trapezoid_area,
    unit_box,
)
from .scene import (
    NOMINAL_PARAMS,
    PARENCHYMA,
    TissueLabel,
    TissueParamField,
    brain_mask,
    builtin_stroke_scene,
    load_scene,
    parenchyma_mask,
    save_scene,
)
from .generator import (
    PhantomCase,
    PhantomGenerator,
    generate_phantom,
    ground_truth_maps,
    lesion_masks,
    motion_schedule,
    write_case,
)

__all__ = [
    "AcquisitionConfig",
    "GammaVariateParams",
    "NoiseMotionConfig",
    "as_dict",
    "schedule_from_list",
    "TimeGrid",
    "box_coverage",
    "box_irf",
    "convolve_causal",
    "delayed_equal_area_copy",
    "gamma_variate",
    "synth_tac",
    "trapezoid_area",
    "unit_box",
    "NOMINAL_PARAMS",
    "PARENCHYMA",
    "TissueLabel",
    "TissueParamField",
    "brain_mask",
    "builtin_stroke_scene",
    "load_scene",
    "parenchyma_mask",
    "save_scene",
    "PhantomCase",
    "PhantomGenerator",
    "generate_phantom",
    "ground_truth_maps",
    "lesion_masks",
    "motion_schedule",
    "write_case",
]
