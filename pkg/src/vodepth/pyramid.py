"""Compact pyramidal depth estimator and residual composition of its outputs."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from . import tensor as T
from .skip import ConvLayer

CHANNELS = (16, 32, 64, 96, 128)
NUM_SCALES = 4
DMAX_FRACTION = 0.3
MIN_DISPARITY = 1e-6


@dataclass
class DisparityOutputs:
    """Left (``d_lr``) and right (``d_rl``) disparities, finest scale first."""

    d_lr: list = field(default_factory=list)
    d_rl: list = field(default_factory=list)

    @property
    def num_scales(self) -> int:
        return len(self.d_lr)


class PyramidEstimator(torch.nn.Module):
    """Encoder-decoder taking RGB + DD (4 channels) to 2-channel disparities.

    Encoder level ``i`` runs at 1/2**i resolution. Each decoder level fuses
    the encoder features with the upsampled coarser decoder features and,
    below the coarsest head, the upsampled coarser estimate. Heads end in a
    sigmoid scaled by 0.3 x (width at that scale).
    """

    def __init__(self, in_channels: int = 4, channels=CHANNELS, generator=None, dtype=torch.float64):
        super().__init__()
        self.channels = tuple(channels)
        self.levels = len(self.channels)
        if self.levels < NUM_SCALES + 1:
            raise ValueError(f"need at least {NUM_SCALES + 1} levels")
        cin = in_channels
        for i, c in enumerate(self.channels):
            setattr(self, f"enc{i}a", ConvLayer(cin, c, 3, generator, dtype, stride=1 if i == 0 else 2))
            setattr(self, f"enc{i}b", ConvLayer(c, c, 3, generator, dtype))
            cin = c
        for i in range(NUM_SCALES - 1, -1, -1):
            coarser = self.channels[i + 1]
            extra = 2 if i < NUM_SCALES - 1 else 0
            setattr(self, f"dec{i}", ConvLayer(self.channels[i] + coarser + extra, self.channels[i], 3, generator, dtype))
            setattr(self, f"head{i}", ConvLayer(self.channels[i], 2, 3, generator, dtype))
        self.forward_count = 0

    @property
    def divisor(self) -> int:
        return 2 ** (self.levels - 1)

    def forward(self, image, dd) -> DisparityOutputs:
        n, _, h, w = image.shape
        if h % self.divisor or w % self.divisor:
            raise ValueError(f"input size {h}x{w} must be divisible by {self.divisor}")
        self.forward_count += 1
        x = T.concat_channels([image, dd])
        feats = []
        for i in range(self.levels):
            x = T.elu(getattr(self, f"enc{i}a")(x))
            x = T.elu(getattr(self, f"enc{i}b")(x))
            feats.append(x)
        up = feats[-1]
        fraction = None
        heads = [None] * NUM_SCALES
        for i in range(NUM_SCALES - 1, -1, -1):
            parts = [feats[i], T.upsample_bilinear_x2(up)]
            if fraction is not None:
                parts.append(T.upsample_bilinear_x2(fraction))
            up = T.elu(getattr(self, f"dec{i}")(T.concat_channels(parts)))
            fraction = T.sigmoid(getattr(self, f"head{i}")(up))
            heads[i] = fraction * (DMAX_FRACTION * (w >> i))
        out = DisparityOutputs()
        for d in heads:
            out.d_lr.append(d[:, 0:1])
            out.d_rl.append(d[:, 1:2])
        return out


def scale_residual(dd_prime, s: int):
    """Residual for scale index ``s`` (0 = full): pooled, then divided by 2**s."""
    r = 2 ** s
    return T.avg_pool(dd_prime, r) / r


def compose_outputs(pre: DisparityOutputs, dd_prime_left=None, dd_prime_right=None) -> DisparityOutputs:
    """Add the skip-module correction at every scale; clamp at 1e-6.

    A ``None`` residual leaves that view untouched.
    """
    out = DisparityOutputs()
    for s in range(pre.num_scales):
        for src, res, dst in ((pre.d_lr, dd_prime_left, out.d_lr), (pre.d_rl, dd_prime_right, out.d_rl)):
            d = src[s]
            if res is not None:
                d = (d + scale_residual(res, s)).clamp(min=MIN_DISPARITY)
            dst.append(d)
    return out
