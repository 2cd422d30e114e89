"""
💾 MODEL FILES

`<stem>.json` holds the architecture, the input/target normalization
constants and the parameter shapes; `<stem>.f32raw` holds every weight as
little-endian float32, in parameter order.
"""

import json
import logging
from pathlib import Path

import numpy as np

from perfusion import __version__
from perfusion.exceptions import ArtifactIOError, PayloadLengthError, SidecarDecodeError, UnsupportedVersionError
from perfusion.services.volume_model import default_norm_range

from .dataset import InputNormalization
from .model import OUTPUT_KINDS, UNet, UNetConfig

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = "1"


def save_model(model: UNet, stem, extra=None) -> None:
    stem = Path(stem)
    cfg = model.config
    norm = InputNormalization.for_config(cfg)
    descriptor = {
        "format_version": MODEL_FORMAT_VERSION,
        "package_version": __version__,
        "architecture": {
            "in_channels": int(cfg.in_channels),
            "out_channels": int(cfg.out_channels),
            "depth": int(cfg.depth),
            "base_channels": int(cfg.base_channels),
            "kernel": 3,
            "pool": "avg2",
            "upsample": "nearest2+conv3",
            "head": "conv1+logistic",
        },
        "time_stride": int(cfg.time_stride),
        "n_frames": int(cfg.n_frames),
        "seed": int(cfg.seed),
        "input_hu_window": list(norm.hu_window),
        "outputs": [kind.value for kind in OUTPUT_KINDS],
        "target_ranges": {kind.value: list(default_norm_range(kind)) for kind in OUTPUT_KINDS},
        "parameter_shapes": [list(p.shape) for p in model.parameters()],
    }
    if extra:
        descriptor.update(extra)
    try:
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".f32raw").write_bytes(model.get_flat().astype("<f4").tobytes())
        stem.with_suffix(".json").write_text(json.dumps(descriptor, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write model: {exc}", stem) from exc
    logger.info(f"💾 Model with {model.n_parameters} weights saved to {stem}")


def load_model(stem):
    """Return (UNet, descriptor dict)."""
    stem = Path(stem)
    json_path = stem.with_suffix(".json")
    try:
        descriptor = json.loads(json_path.read_text(encoding="utf-8"))
        payload = stem.with_suffix(".f32raw").read_bytes()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read model: {exc}", stem) from exc
    except json.JSONDecodeError as exc:
        raise SidecarDecodeError(f"malformed model descriptor: {exc}", json_path) from exc

    if descriptor.get("format_version") != MODEL_FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported model format {descriptor.get('format_version')!r}", json_path)
    try:
        arch = descriptor["architecture"]
        config = UNetConfig(
            in_channels=arch["in_channels"],
            out_channels=arch["out_channels"],
            depth=arch["depth"],
            base_channels=arch["base_channels"],
            time_stride=descriptor["time_stride"],
            n_frames=descriptor["n_frames"],
            seed=descriptor.get("seed", 0),
            input_hu_window=tuple(descriptor["input_hu_window"]),
        )
    except KeyError as exc:
        raise SidecarDecodeError(f"model descriptor missing key {exc}", json_path) from exc

    model = UNet(config)
    expected = model.n_parameters * 4
    if len(payload) != expected:
        raise PayloadLengthError(f"model payload has {len(payload)} bytes, architecture needs {expected}", stem)
    model.set_flat(np.frombuffer(payload, dtype="<f4"))
    return model, descriptor
