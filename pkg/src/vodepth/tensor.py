"""Differentiable primitives shared by every network and loss in the package.

Tensors are ``torch.Tensor`` objects laid out as (batch, channels, height,
width). Reverse-mode differentiation is delegated to torch autograd; this
module fixes the exact forward semantics of each primitive (border policy,
padding, tie handling) so the rest of the package never calls
``torch.nn.functional`` directly.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

# 64-bit for verification, 32-bit for training.
PRECISION = {"test": torch.float64, "train": torch.float32}


_FINITE_CHECKS = False


class finite_checks:
    """Context manager making every primitive verify its output is finite.

    Off by default: the training loop checks the loss terms instead, which
    catches the same failures at a fraction of the cost.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled

    def __enter__(self):
        global _FINITE_CHECKS
        self._prev, _FINITE_CHECKS = _FINITE_CHECKS, self.enabled
        return self

    def __exit__(self, *exc):
        global _FINITE_CHECKS
        _FINITE_CHECKS = self._prev


def check_finite(t: torch.Tensor, name: str = "tensor", force: bool = False) -> torch.Tensor:
    if (force or _FINITE_CHECKS) and not torch.isfinite(t).all():
        raise FloatingPointError(f"non-finite values produced by {name}")
    return t


def parameter(value: torch.Tensor | np.ndarray) -> torch.nn.Parameter:
    """Wrap ``value`` as a trainable parameter with a zero gradient buffer."""
    value = torch.as_tensor(value)
    p = torch.nn.Parameter(value.clone())
    p.grad = torch.zeros_like(p)
    return p


def _check_nchw(x: torch.Tensor, name: str) -> None:
    if x.dim() != 4:
        raise ValueError(f"{name} expects a 4-d (N, C, H, W) tensor, got shape {tuple(x.shape)}")


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0):
    """Cross-correlation (no kernel flip) with zero padding."""
    _check_nchw(x, "conv2d")
    if weight.dim() != 4 or weight.shape[1] != x.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.shape[1]} channels, "
            f"weights have shape {tuple(weight.shape)}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValueError(f"bias shape {tuple(bias.shape)} does not match {weight.shape[0]} filters")
    return check_finite(F.conv2d(x, weight, bias, stride=stride, padding=padding), "conv2d")


def same_padding(k: int) -> int:
    if k % 2 != 1:
        raise ValueError(f"'same' padding needs an odd kernel, got {k}")
    return (k - 1) // 2


def max_pool2d(x, k: int, stride: int = 1, padding: int = 0):
    """Window maximum; padded cells behave as -inf.

    The gradient goes to the first maximal element of each window in
    row-major scan order.
    """
    _check_nchw(x, "max_pool2d")
    if k < 1:
        raise ValueError("max_pool2d kernel must be >= 1")
    # torch.max_pool2d already pads with -inf and routes ties to the first
    # maximum, but it refuses padding > k // 2.
    if padding > k // 2:
        x = F.pad(x, (padding, padding, padding, padding), value=-math.inf)
        padding = 0
    return F.max_pool2d(x, k, stride=stride, padding=padding)


def bilinear_warp(source, disparity, direction: int):
    """Sample ``source`` at ``(x + direction * disparity(x, y), y)``.

    Only the horizontal coordinate moves. Sample coordinates are clamped to
    ``[0, W - 1]`` so the border column is repeated outside the image. The
    result is differentiable with respect to both ``source`` and
    ``disparity``.
    """
    _check_nchw(source, "bilinear_warp")
    _check_nchw(disparity, "bilinear_warp")
    if direction not in (-1, 1):
        raise ValueError("direction must be +1 or -1")
    n, c, h, w = source.shape
    if disparity.shape != (n, 1, h, w):
        raise ValueError(
            f"disparity shape {tuple(disparity.shape)} incompatible with source {tuple(source.shape)}"
        )
    xs = torch.arange(w, dtype=source.dtype, device=source.device).view(1, 1, 1, w)
    coords = (xs + direction * disparity).clamp(0.0, w - 1)
    x0 = coords.detach().floor()
    frac = coords - x0
    i0 = x0.long().clamp(0, w - 1)
    i1 = (i0 + 1).clamp(max=w - 1)
    i0 = i0.expand(n, c, h, w)
    i1 = i1.expand(n, c, h, w)
    frac = frac.expand(n, c, h, w)
    left = torch.gather(source, 3, i0)
    right = torch.gather(source, 3, i1)
    return check_finite(left + frac * (right - left), "bilinear_warp")


def add(a, b):
    return check_finite(a + b, "add")


def sub(a, b):
    return check_finite(a - b, "sub")


def mul(a, b):
    return check_finite(a * b, "mul")


def absolute(x):
    return torch.abs(x)


def exp(x):
    return check_finite(torch.exp(x), "exp")


def sigmoid(x):
    return torch.sigmoid(x)


def elu(x):
    return F.elu(x)


def mean(x):
    return check_finite(x.mean(), "mean")


def total(x):
    return x.sum()


def concat_channels(tensors: Sequence[torch.Tensor]):
    tensors = list(tensors)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ValueError(
                f"concat_channels shape mismatch: {tuple(ref)} vs {tuple(t.shape)}"
            )
    return check_finite(torch.cat(tensors, dim=1), "concat_channels")


def upsample_bilinear_x2(x):
    _check_nchw(x, "upsample_bilinear_x2")
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def downsample_avg_x2(x):
    _check_nchw(x, "downsample_avg_x2")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ValueError(f"downsample_avg_x2 needs even spatial size, got {tuple(x.shape[2:])}")
    return F.avg_pool2d(x, 2)


def avg_pool(x, r: int):
    """Non-overlapping r x r average pooling (r = 1 is the identity)."""
    return x if r == 1 else F.avg_pool2d(x, r)


def mean_pool3x3(x):
    """3x3 local mean over in-image neighbours only, same output size."""
    _check_nchw(x, "mean_pool3x3")
    n, c, h, w = x.shape
    # a depthwise box convolution is much faster than avg_pool2d on NHWC data
    box = torch.ones(c, 1, 3, 3, dtype=x.dtype, device=x.device)
    count = F.conv2d(torch.ones(1, 1, h, w, dtype=x.dtype, device=x.device),
                     torch.ones(1, 1, 3, 3, dtype=x.dtype, device=x.device), padding=1)
    return F.conv2d(x, box, padding=1, groups=c) / count


def backward(loss: torch.Tensor) -> None:
    """Accumulate d(loss)/d(parameter) into every parameter's ``.grad``.

    The recorded graph is released afterwards.
    """
    if loss.numel() != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    check_finite(loss, "loss", force=True)
    loss.backward()


def zero_grad(params: Iterable[torch.nn.Parameter]) -> None:
    for p in params:
        if p.grad is None:
            p.grad = torch.zeros_like(p)
        else:
            p.grad.zero_()


def numerical_gradient(fn: Callable[[], torch.Tensor], x: torch.Tensor, step: float = 1e-5) -> torch.Tensor:
    """Central finite differences of scalar ``fn()`` with respect to ``x``.

    ``x`` is perturbed in place, one element at a time.
    """
    grad = torch.zeros_like(x)
    flat = x.data.view(-1)
    g = grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            fp = fn().item()
            flat[i] = orig - step
            fm = fn().item()
            flat[i] = orig
            g[i] = (fp - fm) / (2 * step)
    return grad


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(a.norm().item(), b.norm().item(), 1e-12)
    return (a - b).norm().item() / denom


def gradient_check(fn: Callable[[], torch.Tensor], inputs: Sequence[torch.Tensor], step: float = 1e-5) -> float:
    """Worst relative error between autograd and finite differences.

    ``inputs`` must be float64 leaf tensors with ``requires_grad`` set.
    """
    for x in inputs:
        if x.grad is not None:
            x.grad = None
    out = fn()
    backward(out)
    analytic = [x.grad.detach().clone() for x in inputs]
    worst = 0.0
    for x, a in zip(inputs, analytic):
        n = numerical_gradient(fn, x, step)
        worst = max(worst, relative_error(a, n))
    return worst
