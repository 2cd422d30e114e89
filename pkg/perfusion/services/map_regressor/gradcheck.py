"""
🔬 GRADIENT CHECK

Analytic parameter gradients against central finite differences, in double
precision, for the masked MSE of one sample. A coordinate whose ±eps
perturbation switches any ReLU on or off straddles a kink, where the loss
has no derivative; such coordinates are left out of the comparison.
"""

import logging

import numpy as np

from .loss import mse_loss
from .model import UNet

logger = logging.getLogger(__name__)

REL_ERR_FLOOR = 1e-6


def relative_error(analytic, numeric, floor=REL_ERR_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)


def _loss(model, x, y, mask):
    loss, _ = mse_loss(model.forward(x), y, mask)
    return loss


def grad_check(model: UNet, sample, eps=1e-5, max_params=None, seed=0):
    """
    Return the maximum relative error over the checked parameters.

    `sample` is a TrainingSample or an (x, y, mask) tuple. With `max_params`
    a seeded subset of parameters is checked instead of all of them.
    """
    if hasattr(sample, "x"):
        x, y, mask = sample.x, sample.y, sample.mask
    else:
        x, y, mask = sample
    net = model.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)[None]
    y = np.asarray(y, dtype=np.float64)[None]
    mask = None if mask is None else np.asarray(mask, dtype=bool)[None]

    net.zero_grad()
    _, grad = mse_loss(net.forward(x), y, mask)
    net.backward(grad)
    analytic = net.grad_flat()

    weights = net.get_flat()
    indices = np.arange(weights.size)
    if max_params is not None and max_params < weights.size:
        indices = np.sort(np.random.default_rng(seed).choice(weights.size, size=int(max_params), replace=False))

    numeric = np.empty(indices.size)
    smooth = np.ones(indices.size, dtype=bool)
    for n, i in enumerate(indices):
        original = weights[i]
        weights[i] = original + eps
        net.set_flat(weights)
        plus = _loss(net, x, y, mask)
        plus_pattern = net.activation_pattern()
        weights[i] = original - eps
        net.set_flat(weights)
        minus = _loss(net, x, y, mask)
        smooth[n] = np.array_equal(plus_pattern, net.activation_pattern())
        weights[i] = original
        numeric[n] = (plus - minus) / (2.0 * eps)
    net.set_flat(weights)

    skipped = int((~smooth).sum())
    if skipped:
        logger.debug(f"🔬 {skipped} of {indices.size} coordinates sit on a ReLU kink and were skipped")
    if not smooth.any():
        return 0.0
    return float(relative_error(analytic[indices][smooth], numeric[smooth]).max())
