"""
🧩 PIPELINE STAGES

One function per stage of an experiment. Each works on case directories so
the management commands can run a stage on its own and the experiment
pipeline can chain them.

    <cases>/case_0007/   volume, labels, brain_mask, tissue_mask, truth_*, aif.csv, scene.json
    <fit>/case_0007/     preprocessed volume, brain and tissue masks, CBV..DELAY maps, fit_status, aif/vof curves,
                         voxel lists, shifts.csv, summary.json, optional *_svd maps
    <infer>/case_0007/   CBV, CBF, TTP, MTT maps predicted from the volume alone
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from perfusion.exceptions import ArtifactIOError, InvariantViolationError
from perfusion.services.map_regressor import (
    InputNormalization,
    UNet,
    infer,
    samples_from_case,
)
from perfusion.services.perfusion_fit import FitConfig, fit_volume, fit_volume_svd, write_maps, write_summary
from perfusion.services.phantom_sim import (
    AcquisitionConfig,
    GammaVariateParams,
    NoiseMotionConfig,
    PhantomGenerator,
    builtin_stroke_scene,
    write_case,
)
from perfusion.services.preprocess import BilateralConfig, MotionCorrector, filter_timeseries, write_shift_log
from perfusion.services.vascular_functions import VascularFunctionExtractor, write_voxel_list
from perfusion.services.volume_model import (
    BinaryMask,
    MapKind,
    read_curve,
    read_map,
    read_mask,
    read_volume,
    write_curve,
    write_mask,
    write_volume,
)

logger = logging.getLogger(__name__)

AIF_SOURCES = ("auto", "generator")
TISSUE_MASK = "tissue_mask"


def case_name(index: int) -> str:
    return f"case_{int(index):04d}"


def case_seed(seed: int, index: int) -> int:
    """Independent per-case seed derived from the run seed and the case index."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def healthy_indices(n_cases: int, n_healthy: int, seed: int) -> frozenset:
    if not 0 <= n_healthy <= n_cases:
        raise InvariantViolationError(f"healthy cases must lie in [0, {n_cases}], got {n_healthy}")
    chosen = np.random.default_rng([int(seed), 2]).choice(n_cases, size=n_healthy, replace=False)
    return frozenset(int(i) for i in chosen)


def case_dirs(root) -> list:
    root = Path(root)
    if not root.is_dir():
        raise ArtifactIOError("case directory not found", root)
    return sorted(p for p in root.iterdir() if p.is_dir())


# --- simulate ----------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationPlan:
    """A cohort of builtin stroke phantoms, numbered from `first_index`."""

    n_cases: int = 1
    first_index: int = 0
    healthy_cases: int = 0
    nx: int = 64
    ny: int = 64
    seed: int = 0
    acquisition: AcquisitionConfig = None
    bolus: GammaVariateParams = None
    noise_motion: NoiseMotionConfig = None

    def __post_init__(self):
        if int(self.n_cases) < 1:
            raise InvariantViolationError(f"n_cases must be >= 1, got {self.n_cases}")

    @property
    def indices(self):
        return range(int(self.first_index), int(self.first_index) + int(self.n_cases))


def simulate_cohort(plan: SimulationPlan, out_root) -> list:
    """Write one directory per case and return their paths."""
    out_root = Path(out_root)
    acq = plan.acquisition or AcquisitionConfig.from_settings()
    bolus = plan.bolus or GammaVariateParams.from_settings()
    template = plan.noise_motion or NoiseMotionConfig.from_settings()
    healthy = healthy_indices(int(plan.n_cases), int(plan.healthy_cases), plan.seed + int(plan.first_index))

    written = []
    for offset, index in enumerate(plan.indices):
        seed = case_seed(plan.seed, index)
        scene = builtin_stroke_scene(nx=plan.nx, ny=plan.ny, seed=seed, healthy=offset in healthy)
        generator = PhantomGenerator(acq=acq, bolus=bolus, noise_motion=replace(template, rng_seed=seed))
        case = generator.simulate(scene)
        written.append(write_case(case, out_root / case_name(index), generator=generator))
    logger.info(f"🧪 Simulated {len(written)} cases ({len(healthy)} healthy) into {out_root}")
    return written


# --- preprocess and fit ----------------------------------------------------------------


def preprocess_volume(vol, register=True, reference_index=None, smooth=True, bilateral: BilateralConfig = None):
    """Register then edge-preserving filter; returns (volume, ShiftLog or None)."""
    log = None
    if register:
        vol, log = MotionCorrector().register(vol, reference_index)
    if smooth:
        vol = filter_timeseries(vol, bilateral or BilateralConfig.from_settings())
    return vol, log


@dataclass(frozen=True)
class FitOptions:
    register: bool = True
    smooth: bool = True
    reference_index: int = None
    aif_source: str = "auto"
    pvc: bool = None
    svd: bool = False
    svd_threshold: float = None
    threads: int = 1
    fit_overrides: tuple = ()

    def __post_init__(self):
        if self.aif_source not in AIF_SOURCES:
            raise InvariantViolationError(f"aif_source must be one of {AIF_SOURCES}, got {self.aif_source!r}")

    def fit_config(self, dt) -> FitConfig:
        return FitConfig.from_settings(dt=dt, **dict(self.fit_overrides))


def _load_mask(case_dir, vol):
    stem = Path(case_dir) / "brain_mask"
    if stem.with_suffix(".json").exists():
        return read_mask(stem)
    logger.warning(f"⚠️ No brain mask in {case_dir}, fitting every voxel")
    return BinaryMask(data=np.ones(vol.spatial_shape, dtype=bool), spacing=vol.spacing)


def _load_tissue_mask(case_dir, brain):
    """Parenchyma without vessels; cases that ship none fall back to the brain mask."""
    stem = Path(case_dir) / TISSUE_MASK
    if stem.with_suffix(".json").exists():
        return read_mask(stem)
    logger.warning(f"⚠️ No tissue mask in {case_dir}, lesions will be segmented inside the brain mask")
    return brain


def fit_case(case_dir, out_dir, options: FitOptions = None) -> dict:
    """Preprocess, extract vascular functions and fit one case; returns the fit summary."""
    options = options or FitOptions()
    case_dir, out_dir = Path(case_dir), Path(out_dir)
    raw = read_volume(case_dir / "volume")
    mask = _load_mask(case_dir, raw)

    vol, shift_log = preprocess_volume(
        raw, register=options.register, reference_index=options.reference_index, smooth=options.smooth
    )
    write_volume(vol, out_dir / "preprocessed")
    write_mask(mask, out_dir / "brain_mask")
    write_mask(_load_tissue_mask(case_dir, mask), out_dir / TISSUE_MASK)
    if shift_log is not None:
        write_shift_log(shift_log, out_dir / "shifts.csv")

    extracted = VascularFunctionExtractor(pvc=options.pvc).extract(vol, mask)
    write_curve(extracted["aif"], out_dir / "aif.csv")
    write_curve(extracted["vof"], out_dir / "vof.csv")
    write_voxel_list(extracted["aif_voxels"], out_dir / "aif_voxels.csv")
    write_voxel_list(extracted["vof_voxels"], out_dir / "vof_voxels.csv")
    aif = extracted["fit_aif"]
    if options.aif_source == "generator":
        aif = read_curve(case_dir / "aif.csv")

    result = fit_volume(vol, aif, options.fit_config(vol.dt), mask=mask, threads=options.threads)
    write_maps(result.maps, out_dir)
    write_mask(BinaryMask(data=result.status > 0, spacing=vol.spacing), out_dir / "fit_status",
               kind="LABELS", values=result.status)

    summary = dict(result.summary, case=case_dir.name, aif_source=options.aif_source,
                   registered=bool(options.register), smoothed=bool(options.smooth))
    if options.svd:
        write_maps(fit_volume_svd(vol, aif, mask=mask, threshold_frac=options.svd_threshold), out_dir, suffix="_svd")
        summary["svd"] = True
    write_summary(summary, out_dir / "summary.json")
    return summary


# --- learn and infer ---------------------------------------------------------------------


def load_fit_case(fit_dir):
    """(preprocessed volume, fitted maps, brain mask) of one fitted case."""
    fit_dir = Path(fit_dir)
    vol = read_volume(fit_dir / "preprocessed")
    maps = {kind: read_map(fit_dir / kind.value, kind=kind) for kind in (MapKind.CBV, MapKind.CBF, MapKind.TTP)}
    return vol, maps, read_mask(fit_dir / "brain_mask")


def collect_samples(fit_dirs, norm: InputNormalization) -> list:
    """Training samples from fitted cases: preprocessed slices against fitted maps, masked to the brain."""
    samples = []
    for fit_dir in fit_dirs:
        vol, maps, mask = load_fit_case(fit_dir)
        samples.extend(samples_from_case(vol, maps, norm, mask=mask, case_id=Path(fit_dir).name))
    return samples


def infer_case(model: UNet, case_dir, out_dir, register=True, smooth=True, reference_index=None,
               volume_name="volume") -> dict:
    """Preprocess a raw case volume and predict its maps; nothing but the model and the volume is read."""
    out_dir = Path(out_dir)
    raw = read_volume(Path(case_dir) / volume_name)
    vol, _ = preprocess_volume(raw, register=register, reference_index=reference_index, smooth=smooth)
    maps = infer(model, vol)
    write_maps(maps, out_dir)
    return maps

