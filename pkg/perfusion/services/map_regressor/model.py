"""
🕸️ ENCODER-DECODER MAP REGRESSOR

depth × [conv-relu-conv-relu → skip → avg-pool]
bottleneck conv-relu-conv-relu at base · 2^depth channels
depth × [upsample → conv → concat skip → conv-relu-conv-relu]
1×1 conv head → logistic, one channel each for CBV, CBF and TTP
"""

import math
from dataclasses import dataclass

import numpy as np

from perfusion.conf import perfusion_section
from perfusion.exceptions import InvariantViolationError, ShapeMismatchError
from perfusion.services.volume_model import MapKind

from .layers import AvgPool2, Conv2d, ReLU, Sigmoid, UpsampleNearest2, conv_block

OUTPUT_KINDS = (MapKind.CBV, MapKind.CBF, MapKind.TTP)


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int
    out_channels: int = 3
    depth: int = 2
    base_channels: int = 8
    time_stride: int = 1
    n_frames: int = None
    seed: int = 0
    input_hu_window: tuple = (0.0, 60.0)

    def __post_init__(self):
        if int(self.out_channels) != len(OUTPUT_KINDS):
            raise InvariantViolationError(f"out_channels must be {len(OUTPUT_KINDS)}")
        if int(self.in_channels) < 1 or int(self.depth) < 1 or int(self.base_channels) < 1:
            raise InvariantViolationError("in_channels, depth and base_channels must be >= 1")
        if int(self.time_stride) < 1:
            raise InvariantViolationError("time_stride must be >= 1")
        if self.n_frames is None:
            object.__setattr__(self, "n_frames", int(self.in_channels) * int(self.time_stride))
        elif channels_for(self.n_frames, self.time_stride) != int(self.in_channels):
            raise InvariantViolationError(
                f"in_channels {self.in_channels} does not match {self.n_frames} frames at stride {self.time_stride}"
            )

    def check_input(self, height, width):
        step = 2 ** int(self.depth)
        if height % step or width % step:
            raise ShapeMismatchError(f"input {height}x{width} is not divisible by 2^depth = {step}")

    @classmethod
    def for_frames(cls, n_frames, **overrides):
        section = perfusion_section("unet")
        values = {k: section[k] for k in ("depth", "base_channels", "time_stride") if k in section}
        window = perfusion_section("normalization").get("input_hu_window")
        if window is not None:
            values["input_hu_window"] = tuple(float(v) for v in window)
        values.update({k: v for k, v in overrides.items() if v is not None})
        stride = int(values.get("time_stride", 1))
        return cls(in_channels=channels_for(n_frames, stride), n_frames=int(n_frames), **values)


def channels_for(n_frames, time_stride):
    return int(math.ceil(int(n_frames) / int(time_stride)))


class UNet:
    """🕸️ Numpy U-Net with explicit forward/backward."""

    def __init__(self, config: UNetConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(config.seed)
        base, depth = int(config.base_channels), int(config.depth)
        widths = [base * 2 ** level for level in range(depth + 1)]

        self.encoders, self.pools = [], []
        channels = int(config.in_channels)
        for level in range(depth):
            self.encoders.append(conv_block(channels, widths[level], rng, self.dtype))
            self.pools.append(AvgPool2())
            channels = widths[level]
        self.bottleneck = conv_block(channels, widths[depth], rng, self.dtype)

        self.upsamples, self.up_convs, self.decoders = [], [], []
        for level in reversed(range(depth)):
            self.upsamples.append(UpsampleNearest2())
            self.up_convs.append(Conv2d(widths[level + 1], widths[level], 3, rng, self.dtype))
            self.decoders.append(conv_block(2 * widths[level], widths[level], rng, self.dtype))
        self.head = Conv2d(base, int(config.out_channels), 1, rng, self.dtype)
        self.squash = Sigmoid()

    # -- parameters ---------------------------------------------------------------

    def parameters(self):
        params = []
        for block in self.encoders:
            params += block.parameters()
        params += self.bottleneck.parameters()
        for up, dec in zip(self.up_convs, self.decoders):
            params += up.parameters() + dec.parameters()
        params += self.head.parameters()
        return params

    @property
    def n_parameters(self):
        return int(sum(p.values.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def get_flat(self):
        return np.concatenate([p.values.reshape(-1) for p in self.parameters()])

    def set_flat(self, flat):
        flat = np.asarray(flat)
        if flat.size != self.n_parameters:
            raise ShapeMismatchError(f"expected {self.n_parameters} weights, got {flat.size}")
        offset = 0
        for p in self.parameters():
            size = p.values.size
            p.values[...] = flat[offset:offset + size].reshape(p.shape).astype(self.dtype)
            offset += size

    def grad_flat(self):
        return np.concatenate([p.grad.reshape(-1) for p in self.parameters()])

    def activation_pattern(self):
        """Concatenated ReLU states of the last forward."""
        blocks = self.encoders + [self.bottleneck] + self.decoders
        return np.concatenate([
            layer.active.reshape(-1) for block in blocks for layer in block.layers if isinstance(layer, ReLU)
        ])

    def astype(self, dtype):
        clone = UNet(self.config, dtype=dtype)
        clone.set_flat(self.get_flat().astype(dtype))
        return clone

    # -- passes -----------------------------------------------------------------------

    def forward(self, x):
        """(N, C, H, W) or (C, H, W) normalized input -> outputs in (0, 1) of the same batch layout."""
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 3
        if single:
            x = x[None]
        if x.ndim != 4 or x.shape[1] != int(self.config.in_channels):
            raise ShapeMismatchError(f"expected (N, {self.config.in_channels}, H, W) input, got {x.shape}")
        self.config.check_input(*x.shape[2:])

        skips = []
        for block, pool in zip(self.encoders, self.pools):
            x = block.forward(x)
            skips.append(x)
            x = pool.forward(x)
        x = self.bottleneck.forward(x)
        self._skip_channels = []
        for up, conv, dec, skip in zip(self.upsamples, self.up_convs, self.decoders, reversed(skips)):
            x = conv.forward(up.forward(x))
            self._skip_channels.append(x.shape[1])
            x = dec.forward(np.concatenate([x, skip], axis=1))
        out = self.squash.forward(self.head.forward(x))
        return out[0] if single else out

    def backward(self, dout):
        """Accumulate parameter gradients for the last forward; returns the input gradient."""
        dout = np.asarray(dout, dtype=self.dtype)
        if dout.ndim == 3:
            dout = dout[None]
        dx = self.head.backward(self.squash.backward(dout))
        skip_grads = []
        stages = list(zip(self.upsamples, self.up_convs, self.decoders, self._skip_channels))
        for up, conv, dec, split in reversed(stages):
            d = dec.backward(dx)
            skip_grads.append(d[:, split:])
            dx = up.backward(conv.backward(d[:, :split]))
        dx = self.bottleneck.backward(dx)
        for block, pool, dskip in zip(reversed(self.encoders), reversed(self.pools), reversed(skip_grads)):
            dx = block.backward(pool.backward(dx) + dskip)
        return dx

    def predict(self, x, batch_size=8):
        """Forward in fixed-size batches; per-sample outputs do not depend on batch composition."""
        x = np.asarray(x, dtype=self.dtype)
        outputs = [self.forward(x[start:start + batch_size]) for start in range(0, x.shape[0], batch_size)]
        return np.concatenate(outputs, axis=0)
