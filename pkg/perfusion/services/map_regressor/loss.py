import numpy as np

from perfusion.exceptions import ShapeMismatchError


def mse_loss(pred, target, mask=None):
    """
    Mean squared error over channels × masked pixels, with its gradient.

    `mask` is (H, W) or (N, H, W) and broadcast over channels. An empty mask
    gives loss 0 and an all-zero gradient.
    """
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred.astype(np.float64) - target
    if mask is None:
        weights = np.ones_like(diff)
    else:
        mask = np.asarray(mask, dtype=bool)
        channel_axis = pred.ndim - 3
        expanded = np.expand_dims(mask, axis=channel_axis) if mask.ndim == pred.ndim - 1 else mask
        weights = np.broadcast_to(expanded, diff.shape).astype(np.float64)
    count = weights.sum()
    if count == 0:
        return 0.0, np.zeros_like(pred)
    loss = float((weights * diff * diff).sum() / count)
    grad = (2.0 * weights * diff / count).astype(pred.dtype)
    return loss, grad
