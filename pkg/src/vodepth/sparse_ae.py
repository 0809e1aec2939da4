"""Sparsity-invariant densification of sparse VO disparities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from . import tensor as T
from .geometry import SparseDisparityMap

EPS = 1e-8

KERNELS = (9, 5, 3, 3, 1)
FEATURES = (16, 16, 16, 16, 1)


def glorot_uniform(cout: int, cin: int, k: int, generator=None, dtype=torch.float64):
    fan_in, fan_out = cin * k * k, cout * k * k
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    w = torch.rand(cout, cin, k, k, generator=generator, dtype=dtype)
    return (2.0 * w - 1.0) * bound


class SparseConvLayer(torch.nn.Module):
    def __init__(self, cin: int, cout: int, k: int, generator=None, dtype=torch.float64):
        super().__init__()
        self.k = k
        self.weights = T.parameter(glorot_uniform(cout, cin, k, generator, dtype))
        self.bias = T.parameter(torch.zeros(cout, dtype=dtype))

    def forward(self, x, m, check_mask: bool = True):
        return sparse_conv2d(x, m, self, check_mask)


def sparse_conv2d(x, m, layer: SparseConvLayer, check_mask: bool = True):
    """Mask-normalised convolution plus window-max mask propagation.

    ``y = conv(x * m, w) / (box_sum(m) + EPS) + b`` and ``m' = maxpool(m)``.
    The mask is a single channel broadcast over the input channels and never
    receives gradients.
    """
    if m.shape[1] != 1 or m.shape[0] != x.shape[0] or m.shape[2:] != x.shape[2:]:
        raise ValueError(f"mask shape {tuple(m.shape)} does not match input {tuple(x.shape)}")
    m = m.detach()
    if check_mask and not torch.all((m == 0) | (m == 1)):
        raise ValueError("sparse_conv2d mask must be binary")
    k = layer.k
    pad = T.same_padding(k)
    with torch.no_grad():
        ones = torch.ones(1, 1, k, k, dtype=m.dtype, device=m.device)
        inv_count = 1.0 / (T.conv2d(m, ones, None, padding=pad) + EPS)
        m_out = T.max_pool2d(m, k, stride=1, padding=pad)
    num = T.conv2d(x * m, layer.weights, None, padding=pad)
    y = num * inv_count + layer.bias.view(1, -1, 1, 1)
    return y, m_out


@dataclass
class DensifiedPrior:
    dd: torch.Tensor
    mask_out: torch.Tensor


class SparseAutoencoder(torch.nn.Module):
    """Five stride-1 sparse convolutions (9, 5, 3, 3 with 16 filters, then 1x1).

    ELU between layers, no activation on the output so DD can take any
    disparity value.
    """

    def __init__(self, generator=None, dtype=torch.float64):
        super().__init__()
        cin = 1
        for i, (k, cout) in enumerate(zip(KERNELS, FEATURES)):
            setattr(self, f"layer{i}", SparseConvLayer(cin, cout, k, generator, dtype))
            cin = cout

    @property
    def layers(self):
        return [getattr(self, f"layer{i}") for i in range(len(KERNELS))]

    def forward(self, values, mask, return_masks: bool = False):
        x, m = values, mask
        masks = [m]
        for i, layer in enumerate(self.layers):
            # propagated masks are binary by construction
            x, m = layer(x, m, check_mask=(i == 0))
            if i < len(self.layers) - 1:
                x = T.elu(x)
            masks.append(m)
        if return_masks:
            return x, m, masks
        return x, m

    def densify(self, sd: SparseDisparityMap) -> DensifiedPrior:
        dd, m = self(sd.values, sd.mask)
        return DensifiedPrior(dd, m)

    def symmetric_forward(self, sd_left: SparseDisparityMap, sd_right: SparseDisparityMap):
        """Both views through the same weights; gradients from both accumulate."""
        return self.densify(sd_left), self.densify(sd_right)
