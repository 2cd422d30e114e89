"""
🗺️ WHOLE-VOLUME FITTING

Fits every voxel inside a mask in fixed-size chunks. Each voxel owns its
output slot, so maps are identical for any worker count or chunk order.
With more than one worker the chunks go to a multiprocessing pool; inside
daemonic processes (Celery workers) the fit runs in-process.
"""

import json
import logging
import multiprocessing
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from perfusion.conf import unit_constant
from perfusion.exceptions import ArtifactIOError, EmptyMaskError, GridMismatchError, ShapeMismatchError
from perfusion.services.vascular_functions import enhancement
from perfusion.services.volume_model import BinaryMask, Curve, MapKind, ParametricMap, TimeSeriesVolume, write_map

from .config import MAP_KINDS, FitConfig
from .voxel import STATUS_CODES, FitBasis, FitStatus, fit_samples

logger = logging.getLogger(__name__)

CHUNK_SIZE = 512

_FIELDS = ("cbv", "cbf", "mtt", "ttp", "delay")

_worker_basis = None


def _init_worker(aif_samples, dt, t0, cfg, unit_k):
    global _worker_basis
    _worker_basis = FitBasis(aif_samples, dt, t0, cfg, unit_k=unit_k)


def _fit_chunk(job):
    start, curves = job
    values = np.zeros((curves.shape[0], len(_FIELDS)))
    status = np.zeros(curves.shape[0], dtype=np.uint8)
    for row, c in enumerate(curves):
        fit = fit_samples(c, _worker_basis)
        values[row] = [getattr(fit, name) for name in _FIELDS]
        status[row] = STATUS_CODES[fit.status]
    return start, values, status


@dataclass
class FitResult:
    maps: dict
    status: np.ndarray
    summary: dict = field(default_factory=dict)


def _chunks(curves, size):
    for start in range(0, curves.shape[0], size):
        yield start, curves[start:start + size]


def _run_chunks(jobs, init_args, threads):
    if threads > 1 and multiprocessing.current_process().daemon:
        logger.warning("⚠️ Running inside a daemonic worker, fitting in-process")
        threads = 1
    if threads <= 1:
        _init_worker(*init_args)
        return [_fit_chunk(job) for job in jobs]
    with multiprocessing.Pool(processes=threads, initializer=_init_worker, initargs=init_args) as pool:
        return pool.map(_fit_chunk, list(jobs))


def _check_mask(vol: TimeSeriesVolume, mask: BinaryMask):
    if tuple(mask.data.shape) != tuple(vol.spatial_shape):
        raise ShapeMismatchError(f"mask dims {mask.dims} do not match volume {vol.dims[:3]}")
    if mask.is_empty():
        raise EmptyMaskError("fit mask is empty")


def fit_volume(vol: TimeSeriesVolume, aif: Curve, cfg: FitConfig = None, mask: BinaryMask = None,
               threads=1, unit_k=None) -> FitResult:
    """Fit every masked voxel; voxels outside the mask are 0 in every map."""
    if aif.nt != vol.nt or aif.dt != vol.dt or aif.t0 != vol.t0:
        raise GridMismatchError(f"AIF grid {(aif.nt, aif.dt, aif.t0)} differs from volume grid {(vol.nt, vol.dt, vol.t0)}")
    cfg = cfg or FitConfig.from_settings(dt=vol.dt)
    cfg.check_window(vol.nt, vol.dt)
    if mask is None:
        mask = BinaryMask(data=np.ones(vol.spatial_shape, dtype=bool), spacing=vol.spacing)
    _check_mask(vol, mask)
    unit_k = unit_constant() if unit_k is None else float(unit_k)
    threads = max(1, int(threads))

    index = np.flatnonzero(mask.data.reshape(-1))
    curves = enhancement(vol.voxel_curves()[index])
    started = time.perf_counter()
    results = _run_chunks(_chunks(curves, CHUNK_SIZE), (aif.samples, aif.dt, aif.t0, cfg, unit_k), threads)
    seconds = time.perf_counter() - started

    n_vox = int(np.prod(vol.spatial_shape))
    values = np.zeros((n_vox, len(_FIELDS)))
    status = np.zeros(n_vox, dtype=np.uint8)
    for start, chunk_values, chunk_status in results:
        slots = index[start:start + chunk_values.shape[0]]
        values[slots] = chunk_values
        status[slots] = chunk_status

    shape = vol.spatial_shape
    maps = {
        kind: ParametricMap(kind=kind, data=np.clip(values[:, i], 0.0, None).reshape(shape), spacing=vol.spacing)
        for i, kind in enumerate(MAP_KINDS)
    }
    fitted = status[index]
    summary = {
        "voxels_total": int(index.size),
        "voxels_ok": int((fitted == STATUS_CODES[FitStatus.OK]).sum()),
        "voxels_zero_signal": int((fitted == STATUS_CODES[FitStatus.ZERO_SIGNAL]).sum()),
        "voxels_boundary": int((fitted == STATUS_CODES[FitStatus.BOUNDARY]).sum()),
        "throughput_voxels_per_s": float(index.size / seconds) if seconds > 0 else 0.0,
        "seconds": round(seconds, 3),
        "threads": threads,
    }
    logger.info(
        f"⚙️ Fitted {summary['voxels_total']} voxels in {seconds:.1f}s "
        f"(ok={summary['voxels_ok']}, zero={summary['voxels_zero_signal']}, boundary={summary['voxels_boundary']})"
    )
    return FitResult(maps=maps, status=status.reshape(shape), summary=summary)


def write_summary(summary: dict, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write summary: {exc}", path) from exc


def write_maps(maps: dict, out_dir, suffix="") -> None:
    """Write `<out_dir>/<KIND><suffix>.f32raw/.json` for every map."""
    out_dir = Path(out_dir)
    for kind, pmap in maps.items():
        write_map(pmap, out_dir / f"{MapKind(kind).value}{suffix}")
