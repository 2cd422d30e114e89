"""
💾 ARTIFACT I/O

Raw little-endian payload plus a JSON sidecar for volumes (`.f32raw`), maps
(`.f32raw`) and masks (`.u8raw`); CSV for curves. Writers refuse values that
break type invariants and readers reject them instead of repairing.

Sidecar keys: format_version, kind, dims, spacing_mm, dt_s, t0_s (volumes),
units and norm_range (maps).
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from perfusion.exceptions import (
    ArtifactIOError,
    InvariantViolationError,
    NonFiniteValueError,
    PayloadLengthError,
    SidecarDecodeError,
    UnsupportedVersionError,
)

from .types import BinaryMask, Curve, MapKind, ParametricMap, TimeSeriesVolume

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"
VOLUME_KIND = "CTP"
MASK_KINDS = ("MASK", "LABELS")


def _stem_path(stem, suffix):
    return Path(f"{stem}{suffix}")


def _write_bytes(path, payload):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write artifact: {exc.strerror or exc}", path) from exc


def _read_bytes(path):
    try:
        return path.read_bytes()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read artifact: {exc.strerror or exc}", path) from exc


def _write_sidecar(stem, sidecar):
    text = json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    _write_bytes(_stem_path(stem, ".json"), text.encode("utf-8"))


def _read_sidecar(stem, expected_kinds):
    path = _stem_path(stem, ".json")
    raw = _read_bytes(path)
    try:
        sidecar = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SidecarDecodeError(f"malformed sidecar JSON: {exc}", path) from exc
    if not isinstance(sidecar, dict):
        raise SidecarDecodeError("sidecar must be a JSON object", path)

    version = sidecar.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format_version {version!r}", path)

    missing = [key for key in ("kind", "dims", "spacing_mm") if key not in sidecar]
    if missing:
        raise SidecarDecodeError(f"sidecar missing keys {missing}", path)
    if sidecar["kind"] not in expected_kinds:
        raise SidecarDecodeError(f"unexpected kind {sidecar['kind']!r}", path)
    dims = sidecar["dims"]
    if not isinstance(dims, list) or not all(isinstance(d, int) and d > 0 for d in dims):
        raise SidecarDecodeError(f"dims must be positive integers, got {dims!r}", path)
    return sidecar


def _read_payload(stem, suffix, dtype, dims):
    path = _stem_path(stem, suffix)
    payload = _read_bytes(path)
    expected = int(np.prod(dims)) * np.dtype(dtype).itemsize
    if len(payload) != expected:
        raise PayloadLengthError(f"payload has {len(payload)} bytes, sidecar dims {dims} need {expected}", path)
    return np.frombuffer(payload, dtype=dtype)


def _spacing_list(spacing):
    return [float(s) for s in spacing]


def write_volume(vol: TimeSeriesVolume, stem) -> None:
    """Write `<stem>.f32raw` and `<stem>.json`; refuses non-finite values."""
    if not vol.is_finite():
        raise NonFiniteValueError(f"refusing to serialize non-finite volume to {stem}")
    _write_bytes(_stem_path(stem, ".f32raw"), vol.data.astype("<f4").tobytes(order="C"))
    _write_sidecar(stem, {
        "format_version": FORMAT_VERSION,
        "kind": VOLUME_KIND,
        "dims": list(vol.dims),
        "spacing_mm": _spacing_list(vol.spacing),
        "dt_s": vol.dt,
        "t0_s": vol.t0,
    })


def read_volume(stem) -> TimeSeriesVolume:
    sidecar = _read_sidecar(stem, (VOLUME_KIND,))
    dims = sidecar["dims"]
    if len(dims) != 4 or "dt_s" not in sidecar:
        raise SidecarDecodeError("volume sidecar needs 4 dims and dt_s", _stem_path(stem, ".json"))
    nx, ny, nz, nt = dims
    values = _read_payload(stem, ".f32raw", "<f4", dims).reshape(nt, nz, ny, nx)
    if not np.isfinite(values).all():
        raise NonFiniteValueError(f"volume payload contains non-finite values ({stem})")
    return TimeSeriesVolume(
        data=values.astype(np.float32),
        spacing=tuple(sidecar["spacing_mm"]),
        dt=sidecar["dt_s"],
        t0=sidecar.get("t0_s", 0.0),
    )


def write_map(pmap: ParametricMap, stem) -> None:
    _write_bytes(_stem_path(stem, ".f32raw"), pmap.data.astype("<f4").tobytes(order="C"))
    sidecar = {
        "format_version": FORMAT_VERSION,
        "kind": pmap.kind.value,
        "dims": list(pmap.dims),
        "spacing_mm": _spacing_list(pmap.spacing),
        "units": pmap.units,
    }
    if pmap.norm_range is not None:
        sidecar["norm_range"] = list(pmap.norm_range)
    _write_sidecar(stem, sidecar)


def read_map(stem, kind=None) -> ParametricMap:
    kinds = (MapKind(kind).value,) if kind is not None else tuple(k.value for k in MapKind)
    sidecar = _read_sidecar(stem, kinds)
    dims = sidecar["dims"]
    if len(dims) != 3:
        raise SidecarDecodeError("map sidecar needs 3 dims", _stem_path(stem, ".json"))
    nx, ny, nz = dims
    values = _read_payload(stem, ".f32raw", "<f4", dims).reshape(nz, ny, nx)
    norm_range = sidecar.get("norm_range")
    try:
        return ParametricMap(
            kind=sidecar["kind"],
            data=values,
            spacing=tuple(sidecar["spacing_mm"]),
            norm_range=tuple(norm_range) if norm_range is not None else None,
        )
    except InvariantViolationError as exc:
        raise InvariantViolationError(f"{exc} ({stem})") from exc


def write_mask(mask: BinaryMask, stem, kind="MASK", values=None) -> None:
    """Write a mask; `values` lets label fields (uint8 codes) share the format."""
    payload = mask.data.astype("u1") if values is None else np.asarray(values, dtype="u1")
    if payload.shape != mask.data.shape:
        raise InvariantViolationError("label values must match mask geometry")
    _write_bytes(_stem_path(stem, ".u8raw"), payload.tobytes(order="C"))
    _write_sidecar(stem, {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "dims": list(mask.dims),
        "spacing_mm": _spacing_list(mask.spacing),
    })


def read_mask(stem) -> BinaryMask:
    mask, _ = read_labels(stem)
    return mask


def read_labels(stem):
    """Return (BinaryMask of non-zero voxels, raw uint8 values)."""
    sidecar = _read_sidecar(stem, MASK_KINDS)
    dims = sidecar["dims"]
    if len(dims) != 3:
        raise SidecarDecodeError("mask sidecar needs 3 dims", _stem_path(stem, ".json"))
    nx, ny, nz = dims
    values = _read_payload(stem, ".u8raw", "u1", dims).reshape(nz, ny, nx)
    if sidecar["kind"] == "MASK" and (values > 1).any():
        raise InvariantViolationError(f"mask payload holds values other than 0/1 ({stem})")
    return BinaryMask(data=values > 0, spacing=tuple(sidecar["spacing_mm"])), values.copy()


def write_curve(curve: Curve, path) -> None:
    path = Path(path)
    frame = pd.DataFrame({"t_s": curve.times, "value": curve.samples})
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write curve: {exc}", path) from exc


def read_curve(path) -> Curve:
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ArtifactIOError(f"cannot read curve: {exc}", path) from exc
    if list(frame.columns) != ["t_s", "value"] or len(frame) < 2:
        raise SidecarDecodeError("curve CSV needs header t_s,value and two rows", path)
    times = frame["t_s"].to_numpy(dtype=np.float64)
    dt = float(np.round(times[1] - times[0], 9))
    return Curve(samples=frame["value"].to_numpy(dtype=np.float64), dt=dt, t0=float(times[0]))
