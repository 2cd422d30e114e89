"""
🧠 TISSUE PARAMETER SCENES

A scene is the per-voxel ground truth the generator renders: a label, the
box-IRF parameters (cbv, mtt, delay) and a static attenuation offset.
`builtin_stroke_scene` draws a single-slice brain with a nested
penumbra/core lesion, a few arteries and one vein.
"""

import json
import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy import ndimage

from perfusion.exceptions import ArtifactIOError, InvariantViolationError, SidecarDecodeError
from perfusion.services.volume_model import BinaryMask

logger = logging.getLogger(__name__)


class TissueLabel(IntEnum):
    BACKGROUND = 0
    ARTERY = 1
    VEIN = 2
    TISSUE = 3
    PENUMBRA = 4
    CORE = 5


PARENCHYMA = (TissueLabel.TISSUE, TissueLabel.PENUMBRA, TissueLabel.CORE)

# nominal (cbv ml/100g, mtt s, delay s) before per-scene jitter
NOMINAL_PARAMS = {
    TissueLabel.TISSUE: (4.0, 4.0, 0.5),
    TissueLabel.PENUMBRA: (3.0, 8.0, 3.0),
    TissueLabel.CORE: (1.0, 10.0, 4.0),
}

JITTER = 0.2
SKULL_OFFSET_HU = 400.0
TEXTURE_HU = 4.0


def _frozen(values, dtype):
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TissueParamField:
    """Per-voxel hemodynamic ground truth, arrays shaped (nz, ny, nx)."""

    label: np.ndarray
    cbv: np.ndarray
    mtt: np.ndarray
    delay: np.ndarray
    base_offset: np.ndarray = None
    spacing: tuple = (1.0, 1.0, 5.0)

    def __post_init__(self):
        label = _frozen(self.label, np.uint8)
        if label.ndim != 3:
            raise InvariantViolationError(f"scene arrays must be 3-D (nz, ny, nx), got {label.shape}")
        arrays = {}
        for name in ("cbv", "mtt", "delay"):
            arrays[name] = _frozen(getattr(self, name), np.float64)
        offset = np.zeros(label.shape) if self.base_offset is None else self.base_offset
        arrays["base_offset"] = _frozen(offset, np.float64)
        for name, array in arrays.items():
            if array.shape != label.shape:
                raise InvariantViolationError(f"scene {name} shape {array.shape} differs from label shape {label.shape}")
            if not np.isfinite(array).all():
                raise InvariantViolationError(f"scene {name} contains non-finite values")
        if not np.isin(label, [int(v) for v in TissueLabel]).all():
            raise InvariantViolationError("scene label holds unknown codes")

        parenchyma = np.isin(label, [int(v) for v in PARENCHYMA])
        if (arrays["cbv"][parenchyma] <= 0).any() or (arrays["mtt"][parenchyma] <= 0).any():
            raise InvariantViolationError("parenchyma voxels need cbv > 0 and mtt > 0")
        if (arrays["delay"][parenchyma] < 0).any():
            raise InvariantViolationError("parenchyma voxels need delay >= 0")
        if (arrays["cbv"][label == TissueLabel.BACKGROUND] != 0).any():
            raise InvariantViolationError("background voxels must carry cbv = 0")
        if (arrays["cbv"] < 0).any() or (arrays["mtt"] < 0).any():
            raise InvariantViolationError("cbv and mtt must be >= 0")

        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise InvariantViolationError(f"spacing must be three positive values, got {spacing}")

        object.__setattr__(self, "label", label)
        for name, array in arrays.items():
            object.__setattr__(self, name, array)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self):
        nz, ny, nx = self.label.shape
        return (nx, ny, nz)

    @property
    def shape(self):
        return self.label.shape

    def region(self, label):
        return self.label == int(label)

    def has_lesion(self):
        return bool(np.isin(self.label, [TissueLabel.PENUMBRA, TissueLabel.CORE]).any())

    def region_params(self, label):
        """Mean (cbv, mtt, delay) over one region, None when the region is empty."""
        sel = self.region(label)
        if not sel.any():
            return None
        return tuple(float(getattr(self, name)[sel].mean()) for name in ("cbv", "mtt", "delay"))

    def __eq__(self, other):
        if not isinstance(other, TissueParamField):
            return NotImplemented
        return self.spacing == other.spacing and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("label", "cbv", "mtt", "delay", "base_offset")
        )

    __hash__ = None


def brain_mask(scene: TissueParamField) -> BinaryMask:
    """Every non-background voxel (parenchyma plus vessels)."""
    return BinaryMask(data=scene.label != TissueLabel.BACKGROUND, spacing=scene.spacing)


def parenchyma_mask(scene: TissueParamField) -> BinaryMask:
    """Brain tissue without the vessels."""
    return BinaryMask(data=np.isin(scene.label, [int(v) for v in PARENCHYMA]), spacing=scene.spacing)


def _ellipse(ny, nx, cy, cx, ay, ax):
    yy, xx = np.mgrid[0:ny, 0:nx]
    return ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1.0


def _disc(ny, nx, cy, cx, radius):
    yy, xx = np.mgrid[0:ny, 0:nx]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2


def _place_disc(rng, allowed, occupied, radius, attempts=2000):
    """Rejection-sample a disc lying inside `allowed` and one pixel clear of `occupied`."""
    ny, nx = allowed.shape
    clearance = ndimage.binary_dilation(occupied, iterations=1)
    for _ in range(attempts):
        cy = int(rng.integers(radius, ny - radius))
        cx = int(rng.integers(radius, nx - radius))
        disc = _disc(ny, nx, cy, cx, radius)
        if (disc <= allowed).all() and not (disc & clearance).any():
            return disc
    raise InvariantViolationError(f"could not place a vessel of radius {radius} in a {nx}x{ny} scene")


def builtin_stroke_scene(nx=64, ny=64, seed=0, healthy=False, spacing=(1.0, 1.0, 5.0), jitter=JITTER) -> TissueParamField:
    """
    Draw a seeded single-slice stroke scene.

    One jitter factor per parameter kind, uniform in [1 - jitter, 1 + jitter],
    scales all regions together so CORE < PENUMBRA < TISSUE severity holds
    for every seed. `healthy=True` leaves out the lesion.
    """
    if nx < 32 or ny < 32:
        raise InvariantViolationError(f"builtin scenes need nx, ny >= 32, got {nx}x{ny}")
    rng = np.random.default_rng(seed)
    cy, cx = (ny - 1) / 2.0, (nx - 1) / 2.0
    ay, ax = 0.45 * ny, 0.40 * nx

    brain = _ellipse(ny, nx, cy, cx, ay, ax)
    skull = _ellipse(ny, nx, cy, cx, 1.08 * ay + 1.0, 1.08 * ax + 1.0) & ~brain
    label = np.full((ny, nx), TissueLabel.BACKGROUND, dtype=np.uint8)
    label[brain] = TissueLabel.TISSUE

    lesion = np.zeros((ny, nx), dtype=bool)
    if not healthy:
        side = rng.choice([-1.0, 1.0])
        off_x = side * rng.uniform(0.15, 0.3) * ax
        off_y = rng.uniform(-0.15, 0.15) * ay
        py, px = cy + off_y, cx + off_x
        pay, pax = rng.uniform(0.28, 0.38) * ay, rng.uniform(0.28, 0.38) * ax
        penumbra = _ellipse(ny, nx, py, px, pay, pax) & brain

        cay, cax = rng.uniform(0.4, 0.55) * pay, rng.uniform(0.4, 0.55) * pax
        ccy = py + rng.uniform(-0.1, 0.1) * pay
        ccx = px + rng.uniform(-0.1, 0.1) * pax
        core = _ellipse(ny, nx, ccy, ccx, cay, cax)
        # keep at least one penumbra ring pixel around the core
        core &= ndimage.binary_erosion(penumbra, iterations=1)
        label[penumbra] = TissueLabel.PENUMBRA
        label[core] = TissueLabel.CORE
        lesion = penumbra

    allowed = ndimage.binary_erosion(brain, iterations=1) & ~ndimage.binary_dilation(lesion, iterations=2)
    occupied = np.zeros((ny, nx), dtype=bool)
    artery_radius = max(2, int(round(nx / 16)))
    vein_radius = max(3, int(round(6 * nx / 64)))
    n_arteries = int(rng.integers(2, 5))

    vessels = {}
    for _ in range(n_arteries):
        disc = _place_disc(rng, allowed, occupied, artery_radius)
        occupied |= disc
        vessels.setdefault(TissueLabel.ARTERY, []).append(disc)
    disc = _place_disc(rng, allowed, occupied, vein_radius)
    occupied |= disc
    vessels[TissueLabel.VEIN] = [disc]
    for vessel_label, discs in vessels.items():
        for d in discs:
            label[d] = vessel_label

    factors = rng.uniform(1.0 - jitter, 1.0 + jitter, size=3)
    cbv = np.zeros((ny, nx))
    mtt = np.zeros((ny, nx))
    delay = np.zeros((ny, nx))
    for region, nominal in NOMINAL_PARAMS.items():
        sel = label == region
        cbv[sel], mtt[sel], delay[sel] = (v * f for v, f in zip(nominal, factors))

    texture = ndimage.gaussian_filter(rng.standard_normal((ny, nx)), sigma=2.0)
    peak = np.abs(texture).max()
    texture = texture / peak * TEXTURE_HU if peak > 0 else texture
    base_offset = np.zeros((ny, nx))
    parenchyma = np.isin(label, [int(v) for v in PARENCHYMA])
    base_offset[parenchyma] = texture[parenchyma]
    base_offset[skull] = SKULL_OFFSET_HU

    scene = TissueParamField(
        label=label[None], cbv=cbv[None], mtt=mtt[None], delay=delay[None],
        base_offset=base_offset[None], spacing=spacing,
    )
    logger.debug(f"🧠 Scene seed={seed} healthy={healthy} arteries={n_arteries} factors={np.round(factors, 3).tolist()}")
    return scene


def scene_to_dict(scene: TissueParamField) -> dict:
    return {
        "dims": list(scene.dims),
        "spacing_mm": list(scene.spacing),
        "label": scene.label.tolist(),
        "cbv": scene.cbv.tolist(),
        "mtt": scene.mtt.tolist(),
        "delay": scene.delay.tolist(),
        "base_offset": scene.base_offset.tolist(),
    }


def scene_from_dict(payload: dict) -> TissueParamField:
    try:
        return TissueParamField(
            label=np.asarray(payload["label"], dtype=np.uint8),
            cbv=payload["cbv"],
            mtt=payload["mtt"],
            delay=payload["delay"],
            base_offset=payload.get("base_offset"),
            spacing=tuple(payload.get("spacing_mm", (1.0, 1.0, 5.0))),
        )
    except KeyError as exc:
        raise SidecarDecodeError(f"scene JSON missing key {exc}") from exc


def save_scene(scene: TissueParamField, path, extra=None) -> None:
    """Write the scene (and any extra JSON-able config blocks) as one JSON document."""
    path = Path(path)
    payload = scene_to_dict(scene)
    if extra:
        payload.update(extra)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write scene: {exc}", path) from exc


def load_scene(path) -> TissueParamField:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactIOError(f"cannot read scene: {exc}", path) from exc
    except json.JSONDecodeError as exc:
        raise SidecarDecodeError(f"malformed scene JSON: {exc}", path) from exc
    return scene_from_dict(payload)
