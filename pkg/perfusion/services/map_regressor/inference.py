import logging

import numpy as np

from perfusion.exceptions import ShapeMismatchError
from perfusion.services.volume_model import MapKind, ParametricMap, TimeSeriesVolume, default_norm_range, denormalize_map

from .dataset import InputNormalization
from .model import OUTPUT_KINDS, UNet

logger = logging.getLogger(__name__)


def infer(model: UNet, vol: TimeSeriesVolume) -> dict:
    """
    CBV, CBF and TTP maps predicted from the time series alone, plus MTT
    derived as 60·CBV/CBF (0 where CBF is 0).
    """
    if vol.nt != int(model.config.n_frames):
        raise ShapeMismatchError(f"model expects {model.config.n_frames} frames, volume has {vol.nt}")
    inputs = InputNormalization.for_config(model.config).apply(vol)
    outputs = model.predict(inputs)

    maps = {}
    for channel, kind in enumerate(OUTPUT_KINDS):
        normalized = ParametricMap(
            kind=kind,
            data=np.clip(outputs[:, channel], 0.0, 1.0),
            spacing=vol.spacing,
            norm_range=default_norm_range(kind),
        )
        maps[kind] = denormalize_map(normalized)

    cbv = maps[MapKind.CBV].data.astype(np.float64)
    cbf = maps[MapKind.CBF].data.astype(np.float64)
    mtt = np.divide(60.0 * cbv, cbf, out=np.zeros_like(cbv), where=cbf > 0)
    maps[MapKind.MTT] = ParametricMap(kind=MapKind.MTT, data=mtt, spacing=vol.spacing)
    logger.info(f"🔮 Inferred {len(maps)} maps for {vol.data.shape[1]} slice(s)")
    return maps
