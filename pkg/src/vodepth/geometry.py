"""Rectified pinhole stereo rig, depth/disparity conversion and rasterization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class StereoRig:
    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0 or self.baseline <= 0:
            raise ValueError("focal lengths and baseline must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @classmethod
    def kitti_like(cls, height: int = 64, width: int = 128) -> "StereoRig":
        """KITTI-proportioned rig (fx ~ 0.58 * width, 0.54 m baseline)."""
        f = 0.58 * width
        return cls(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                   baseline=0.54, width=width, height=height)

    def resized(self, height: int, width: int) -> "StereoRig":
        sx, sy = width / self.width, height / self.height
        return StereoRig(self.fx * sx, self.fy * sy, (self.cx + 0.5) * sx - 0.5,
                         (self.cy + 0.5) * sy - 0.5, self.baseline, width, height)


def depth_to_disparity(z, rig: StereoRig):
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("depth must be positive")
    d = rig.fx * rig.baseline / z
    return d.item() if d.ndim == 0 else d


def disparity_to_depth(d, rig: StereoRig):
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("disparity must be positive")
    z = rig.fx * rig.baseline / d
    return z.item() if z.ndim == 0 else z


def project_point(p, rig: StereoRig, view: str = "left"):
    """Continuous pixel coordinates (u, v) of a left-camera 3D point."""
    uv = project_points(np.asarray(p, dtype=np.float64).reshape(1, 3), rig, view)[0]
    return float(uv[0]), float(uv[1])


def project_points(points: np.ndarray, rig: StereoRig, view: str = "left") -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    x, y, z = points.T
    if np.any(z <= 0):
        raise ValueError("points must lie in front of the camera (Z > 0)")
    if view == "left":
        shift = 0.0
    elif view == "right":
        shift = rig.baseline
    else:
        raise ValueError(f"view must be 'left' or 'right', got {view!r}")
    u = rig.fx * (x - shift) / z + rig.cx
    v = rig.fy * y / z + rig.cy
    return np.stack([u, v], axis=1)


@dataclass
class SparseDisparityMap:
    """Disparity in pixels plus a {0, 1} validity mask, both (1, 1, H, W)."""

    values: torch.Tensor
    mask: torch.Tensor

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask must have the same shape")

    @property
    def density(self) -> float:
        return float(self.mask.mean())

    @classmethod
    def empty(cls, height: int, width: int, dtype=torch.float64) -> "SparseDisparityMap":
        z = torch.zeros(1, 1, height, width, dtype=dtype)
        return cls(z, z.clone())

    def flipped(self) -> "SparseDisparityMap":
        return SparseDisparityMap(self.values.flip(-1), self.mask.flip(-1))

    def to(self, dtype) -> "SparseDisparityMap":
        return SparseDisparityMap(self.values.to(dtype), self.mask.to(dtype))


def rasterize(points: np.ndarray, rig: StereoRig, view: str = "left",
              dtype=torch.float64) -> SparseDisparityMap:
    """Splat 3D points to their nearest pixel; the smallest depth wins a pixel."""
    h, w = rig.height, rig.width
    values = np.zeros((h, w))
    mask = np.zeros((h, w))
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points):
        uv = project_points(points, rig, view)
        cols = np.floor(uv[:, 0] + 0.5).astype(np.int64)
        rows = np.floor(uv[:, 1] + 0.5).astype(np.int64)
        inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
        z = points[inside, 2]
        rows, cols = rows[inside], cols[inside]
        # far-to-near so nearer points overwrite; stable sort keeps ties in input order
        order = np.argsort(-z, kind="stable")
        values[rows[order], cols[order]] = rig.fx * rig.baseline / z[order]
        mask[rows[order], cols[order]] = 1.0
    return SparseDisparityMap(
        torch.as_tensor(values, dtype=dtype).view(1, 1, h, w),
        torch.as_tensor(mask, dtype=dtype).view(1, 1, h, w),
    )
