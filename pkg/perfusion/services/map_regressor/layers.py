"""
🧩 NETWORK LAYERS

Numpy layers with hand-derived backward passes. Tensors are laid out
(N, C, H, W). Every layer caches what its backward needs during forward,
so one forward must precede each backward.
"""

from dataclasses import dataclass

import numpy as np

from perfusion.exceptions import InvariantViolationError, ShapeMismatchError


@dataclass
class TensorGrad:
    """A parameter tensor and its gradient buffer."""

    values: np.ndarray
    grad: np.ndarray = None

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        if self.grad.shape != self.values.shape:
            raise ShapeMismatchError("gradient buffer must match the parameter shape")

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad[...] = 0

    def astype(self, dtype):
        return TensorGrad(values=self.values.astype(dtype), grad=np.zeros(self.values.shape, dtype=dtype))


# --- functional ops ------------------------------------------------------------

def _im2col(x, k):
    """(N, C, H, W) -> (N, C·k·k, H·W) with zero padding k // 2."""
    n, c, h, w = x.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, k, k, h, w), dtype=x.dtype)
    for ky in range(k):
        for kx in range(k):
            cols[:, :, ky, kx] = xp[:, :, ky:ky + h, kx:kx + w]
    return cols.reshape(n, c * k * k, h * w)


def _col2im(cols, shape, k):
    n, c, h, w = shape
    pad = k // 2
    cols = cols.reshape(n, c, k, k, h, w)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for ky in range(k):
        for kx in range(k):
            xp[:, :, ky:ky + h, kx:kx + w] += cols[:, :, ky, kx]
    return xp[:, :, pad:pad + h, pad:pad + w] if pad else xp


def conv2d(x, weights, bias):
    """Same-size cross-correlation; returns (output, im2col cache)."""
    x = np.asarray(x)
    if x.ndim == 3:
        out, cols = conv2d(x[None], weights, bias)
        return out[0], cols
    k_out, c_in, kh, kw = weights.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeMismatchError(f"kernels must be square and odd, got {kh}x{kw}")
    if x.shape[1] != c_in or bias.shape != (k_out,):
        raise ShapeMismatchError(f"conv expects {c_in} input channels and {k_out} biases, got input {x.shape}")
    n, _, h, w = x.shape
    cols = _im2col(x, kh)
    out = np.matmul(weights.reshape(k_out, -1), cols) + bias[None, :, None]
    return out.reshape(n, k_out, h, w), cols


def conv2d_backward(dout, x_shape, cols, weights):
    """Return (dx, dweights, dbias)."""
    k_out = weights.shape[0]
    n = dout.shape[0]
    d2 = dout.reshape(n, k_out, -1)
    dweights = np.einsum("nkp,ncp->kc", d2, cols).reshape(weights.shape)
    dbias = d2.sum(axis=(0, 2))
    dcols = np.matmul(weights.reshape(k_out, -1).T, d2)
    dx = _col2im(dcols, x_shape, weights.shape[2])
    return dx, dweights, dbias


def avg_pool2(x):
    x = np.asarray(x)
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise InvariantViolationError(f"avg_pool2 needs even height and width, got {h}x{w}")
    return x.reshape(*x.shape[:-2], h // 2, 2, w // 2, 2).mean(axis=(-3, -1))


def avg_pool2_backward(dout):
    return np.repeat(np.repeat(dout, 2, axis=-2), 2, axis=-1) / 4.0


def upsample_nearest2(x):
    return np.repeat(np.repeat(np.asarray(x), 2, axis=-2), 2, axis=-1)


def upsample_nearest2_backward(dout):
    h, w = dout.shape[-2:]
    return dout.reshape(*dout.shape[:-2], h // 2, 2, w // 2, 2).sum(axis=(-3, -1))


def sigmoid(x):
    """Logistic function, kept inside the open interval (0, 1) at the dtype resolution."""
    out = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))
    eps = np.finfo(out.dtype).eps
    return np.clip(out, eps, 1.0 - eps)


# --- layer objects ---------------------------------------------------------------

class Layer:
    def parameters(self):
        return []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, in_channels, out_channels, kernel=3, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel * kernel
        weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_channels, in_channels, kernel, kernel))
        self.weight = TensorGrad(weights.astype(dtype))
        self.bias = TensorGrad(np.zeros(out_channels, dtype=dtype))
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x):
        out, cols = conv2d(x, self.weight.values, self.bias.values)
        self._cache = (x.shape, cols)
        return out

    def backward(self, dout):
        x_shape, cols = self._cache
        dx, dw, db = conv2d_backward(dout, x_shape, cols, self.weight.values)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype)

    def backward(self, dout):
        return np.where(self._mask, dout, 0).astype(dout.dtype)

    @property
    def active(self):
        """On/off state of every unit in the last forward."""
        return self._mask


class AvgPool2(Layer):
    def forward(self, x):
        return avg_pool2(x)

    def backward(self, dout):
        return avg_pool2_backward(dout)


class UpsampleNearest2(Layer):
    def forward(self, x):
        return upsample_nearest2(x)

    def backward(self, dout):
        return upsample_nearest2_backward(dout)


class Sigmoid(Layer):
    def forward(self, x):
        self._out = sigmoid(x)
        return self._out

    def backward(self, dout):
        return dout * self._out * (1.0 - self._out)


class Sequential(Layer):
    def __init__(self, *layers):
        self.layers = list(layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout


def conv_block(in_channels, out_channels, rng, dtype):
    """conv-relu-conv-relu"""
    return Sequential(
        Conv2d(in_channels, out_channels, 3, rng, dtype), ReLU(),
        Conv2d(out_channels, out_channels, 3, rng, dtype), ReLU(),
    )
