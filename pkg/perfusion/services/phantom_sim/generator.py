"""
🧪 PHANTOM GENERATOR

Renders a TissueParamField into a CTP time series:

1. baseline + static offset for every voxel
2. parenchyma: synth_tac(AIF, cbv, mtt, delay); arteries: the AIF; veins: a
   delayed equal-area copy of it
3. per-frame integer in-plane shifts (zero fill)
4. i.i.d. Gaussian noise from a counter-based stream, so the draw for a
   given (frame, voxel) depends only on the seed
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from perfusion.exceptions import InvariantViolationError
from perfusion.services.preprocess import shift_frame
from perfusion.services.volume_model import (
    BinaryMask,
    Curve,
    MapKind,
    ParametricMap,
    TimeSeriesVolume,
    write_curve,
    write_map,
    write_mask,
    write_volume,
)

from .config import AcquisitionConfig, GammaVariateParams, NoiseMotionConfig, as_dict, vein_delay_default
from .curves import TimeGrid, delayed_equal_area_copy, gamma_variate, synth_tac
from .scene import PARENCHYMA, TissueLabel, TissueParamField, brain_mask, parenchyma_mask, save_scene

logger = logging.getLogger(__name__)


def motion_schedule(nt, max_shift, seed):
    """Random per-frame integer shifts within ±max_shift; frame 0 stays put."""
    if max_shift <= 0:
        return tuple((0, 0) for _ in range(nt))
    rng = np.random.default_rng([int(seed), 1])
    shifts = rng.integers(-max_shift, max_shift + 1, size=(nt, 2))
    shifts[0] = 0
    return tuple((int(dx), int(dy)) for dx, dy in shifts)


def _resolve_schedule(nm: NoiseMotionConfig, nt):
    if nm.shift_schedule:
        if len(nm.shift_schedule) != nt:
            raise InvariantViolationError(f"shift schedule has {len(nm.shift_schedule)} entries for {nt} frames")
        return nm.shift_schedule
    return motion_schedule(nt, nm.max_shift_px, nm.rng_seed)


def _noise(shape, sigma, seed):
    generator = np.random.Generator(np.random.Philox(key=int(seed) & (2 ** 64 - 1)))
    return generator.normal(0.0, sigma, size=shape)


def _enhancement_curves(scene: TissueParamField, aif: Curve, vein: Curve):
    """(nt, nz, ny, nx) noiseless enhancement; each distinct parameter triple is synthesized once."""
    nz, ny, nx = scene.shape
    enhancement = np.zeros((aif.nt, nz * ny * nx))
    labels = scene.label.reshape(-1)

    parenchyma = np.flatnonzero(np.isin(labels, [int(v) for v in PARENCHYMA]))
    if parenchyma.size:
        triples = np.stack([
            scene.cbv.reshape(-1)[parenchyma],
            scene.mtt.reshape(-1)[parenchyma],
            scene.delay.reshape(-1)[parenchyma],
        ], axis=1)
        unique, inverse = np.unique(triples, axis=0, return_inverse=True)
        curves = np.stack([synth_tac(aif, *params).samples for params in unique], axis=1)
        enhancement[:, parenchyma] = curves[:, inverse.reshape(-1)]

    enhancement[:, labels == TissueLabel.ARTERY] = aif.samples[:, None]
    enhancement[:, labels == TissueLabel.VEIN] = vein.samples[:, None]
    return enhancement.reshape(aif.nt, nz, ny, nx)


@dataclass(frozen=True)
class PhantomCase:
    """Everything one simulated case produces."""

    volume: TimeSeriesVolume
    scene: TissueParamField
    aif: Curve
    vein: Curve
    truth: dict
    shift_schedule: tuple


class PhantomGenerator:
    """🧪 Synthesizes time series and ground truth from scenes."""

    def __init__(self, acq: AcquisitionConfig = None, bolus: GammaVariateParams = None,
                 noise_motion: NoiseMotionConfig = None, vein_delay=None):
        self.service_name = "Phantom Generator"
        self.acq = acq or AcquisitionConfig.from_settings()
        self.bolus = bolus or GammaVariateParams.from_settings()
        self.noise_motion = noise_motion or NoiseMotionConfig.from_settings()
        self.vein_delay = vein_delay_default() if vein_delay is None else float(vein_delay)
        self.grid = TimeGrid(self.acq.nt, self.acq.dt, self.acq.t0)

    def arterial_input(self) -> Curve:
        return gamma_variate(self.bolus, self.grid)

    def venous_output(self, aif: Curve) -> Curve:
        return delayed_equal_area_copy(aif, self.vein_delay)

    def render(self, scene: TissueParamField):
        """Return (volume, aif, vein, applied shift schedule)."""
        aif = self.arterial_input()
        vein = self.venous_output(aif)
        enhancement = _enhancement_curves(scene, aif, vein)
        data = self.acq.baseline_hu + scene.base_offset[None] + enhancement

        schedule = _resolve_schedule(self.noise_motion, self.acq.nt)
        for t, (dx, dy) in enumerate(schedule):
            if (dx, dy) == (0, 0):
                continue
            for z in range(data.shape[1]):
                data[t, z] = shift_frame(data[t, z], dx, dy)

        if self.noise_motion.noise_sigma_hu > 0:
            data = data + _noise(data.shape, self.noise_motion.noise_sigma_hu, self.noise_motion.rng_seed)

        volume = TimeSeriesVolume(data=data.astype(np.float32), spacing=scene.spacing, dt=self.acq.dt, t0=self.acq.t0)
        return volume, aif, vein, schedule

    def simulate(self, scene: TissueParamField) -> PhantomCase:
        volume, aif, vein, schedule = self.render(scene)
        truth = ground_truth_maps(scene, aif, vein)
        return PhantomCase(volume=volume, scene=scene, aif=aif, vein=vein, truth=truth, shift_schedule=schedule)


def generate_phantom(scene: TissueParamField, acq: AcquisitionConfig, aif_params: GammaVariateParams,
                     nm: NoiseMotionConfig, vein_delay=None) -> TimeSeriesVolume:
    """Deterministic given `nm.rng_seed`: the same inputs give bit-identical volumes."""
    generator = PhantomGenerator(acq=acq, bolus=aif_params, noise_motion=nm, vein_delay=vein_delay)
    volume, _, _, _ = generator.render(scene)
    return volume


def ground_truth_maps(scene: TissueParamField, aif: Curve, vein: Curve = None) -> dict:
    """CBV, CBF, MTT, DELAY and TTP maps; TTP is read off the noiseless enhancement curve."""
    vein = vein if vein is not None else aif
    cbv = scene.cbv
    mtt = scene.mtt
    cbf = np.divide(60.0 * cbv, mtt, out=np.zeros_like(cbv), where=mtt > 0)

    enhancement = _enhancement_curves(scene, aif, vein)
    peak_index = np.argmax(enhancement, axis=0)
    ttp = np.where(enhancement.max(axis=0) > 0, aif.t0 + aif.dt * peak_index, 0.0)
    ttp = np.maximum(ttp, 0.0)

    values = {
        MapKind.CBV: cbv,
        MapKind.CBF: cbf,
        MapKind.MTT: mtt,
        MapKind.DELAY: scene.delay,
        MapKind.TTP: ttp,
    }
    return {kind: ParametricMap(kind=kind, data=data, spacing=scene.spacing) for kind, data in values.items()}


def lesion_masks(scene: TissueParamField):
    """Ground-truth (core, penumbra) masks; the core is not part of the penumbra mask."""
    core = BinaryMask(data=scene.region(TissueLabel.CORE), spacing=scene.spacing)
    penumbra = BinaryMask(data=scene.region(TissueLabel.PENUMBRA), spacing=scene.spacing)
    return core, penumbra


def write_case(case: PhantomCase, case_dir, generator: PhantomGenerator = None) -> Path:
    """Lay out one case directory: volume, labels, truth maps, brain mask, curves and scene JSON."""
    case_dir = Path(case_dir)
    write_volume(case.volume, case_dir / "volume")
    write_mask(brain_mask(case.scene), case_dir / "labels", kind="LABELS", values=case.scene.label)
    write_mask(brain_mask(case.scene), case_dir / "brain_mask")
    write_mask(parenchyma_mask(case.scene), case_dir / "tissue_mask")
    for kind, pmap in case.truth.items():
        write_map(pmap, case_dir / f"truth_{kind.value}")
    write_curve(case.aif, case_dir / "aif.csv")
    write_curve(case.vein, case_dir / "vein.csv")

    extra = {"shift_schedule": [list(s) for s in case.shift_schedule]}
    if generator is not None:
        extra.update({
            "acquisition": as_dict(generator.acq),
            "bolus": as_dict(generator.bolus),
            "noise_motion": as_dict(generator.noise_motion),
            "vein_delay_s": generator.vein_delay,
        })
    save_scene(case.scene, case_dir / "scene.json", extra=extra)
    return case_dir
