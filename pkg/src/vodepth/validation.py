"""Input checks shared by the estimator wrappers and the CLI."""

from __future__ import annotations

import numpy as np
import torch

from .geometry import SparseDisparityMap
from .synth import Sample


def check_image(image, dtype=torch.float32) -> torch.Tensor:
    """Return an (N, 3, H, W) tensor from a (3, H, W) or (N, 3, H, W) array."""
    t = torch.as_tensor(np.asarray(image) if not isinstance(image, torch.Tensor) else image)
    if t.dim() == 3:
        t = t.unsqueeze(0)
    if t.dim() != 4 or t.shape[1] != 3:
        raise ValueError(f"expected an RGB image of shape (3, H, W) or (N, 3, H, W), got {tuple(t.shape)}")
    t = t.to(dtype)
    if not torch.isfinite(t).all():
        raise ValueError("image contains non-finite values")
    if t.min() < 0 or t.max() > 1:
        raise ValueError("image values must lie in [0, 1]")
    return t


def check_sparse_map(sd, height: int, width: int) -> SparseDisparityMap:
    if sd is None:
        return SparseDisparityMap.empty(height, width)
    if not isinstance(sd, SparseDisparityMap):
        raise TypeError(f"expected a SparseDisparityMap, got {type(sd).__name__}")
    if tuple(sd.values.shape[-2:]) != (height, width):
        raise ValueError(f"sparse map is {tuple(sd.values.shape[-2:])}, image is {(height, width)}")
    m = sd.mask
    if not torch.all((m == 0) | (m == 1)):
        raise ValueError("sparse mask must be binary")
    if torch.any(sd.values[m == 0] != 0) or torch.any(sd.values[m == 1] <= 0):
        raise ValueError("sparse values must be > 0 on the mask and 0 elsewhere")
    return sd


def check_samples(X, min_divisor: int = 1) -> list:
    """A non-empty list of equally sized samples."""
    if isinstance(X, Sample):
        X = [X]
    X = list(X)
    if not X:
        raise ValueError("got an empty collection of samples")
    for s in X:
        if not isinstance(s, Sample):
            raise TypeError(f"expected Sample objects, got {type(s).__name__}")
    shape = X[0].shape
    for s in X[1:]:
        if s.shape != shape:
            raise ValueError(f"samples differ in size: {shape} vs {s.shape}")
    h, w = shape
    if h % min_divisor or w % min_divisor:
        raise ValueError(f"image size {h}x{w} must be divisible by {min_divisor}")
    return X
