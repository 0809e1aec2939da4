"""Procedural layered stereo scenes with VO-like sparse points.

Scenes are stacks of textured fronto-parallel planes: a background plane at
the far end of the depth range plus rectangular "objects" standing on a
virtual ground, so nearer objects reach lower in the image. Textures are
band-limited sinusoid mixtures evaluated in continuous left-image
coordinates, which makes the right view an exact resampling of the left one
away from occlusion edges.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .geometry import SparseDisparityMap, StereoRig, depth_to_disparity, rasterize

MAGIC = b"VODP1"
NOISE_SIGMA = {"stereo": 0.01, "mono": 0.03}
MONO_SCALE_RANGE = (0.97, 1.03)
CAMERA_HEIGHT = 1.65
MANIFEST = "index.txt"


@dataclass
class SceneSpec:
    seed: int | tuple = 0
    height: int = 64
    width: int = 128
    n_layers: int = 4
    depth_range: tuple = (2.0, 20.0)
    rig: StereoRig | None = None
    max_frequency: float = 0.2  # cycles per pixel
    n_waves: int = 4
    amplitude: tuple = (0.05, 0.2)  # per-wave, per-channel

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("a scene needs at least one layer")
        lo, hi = self.depth_range
        if not 0 < lo < hi:
            raise ValueError("depth range must satisfy 0 < near < far")
        if self.rig is None:
            self.rig = StereoRig.kitti_like(self.height, self.width)
        elif (self.rig.height, self.rig.width) != (self.height, self.width):
            raise ValueError("rig size does not match the image size")

    def rng(self, stream: int = 0) -> np.random.Generator:
        seed = self.seed if isinstance(self.seed, tuple) else (self.seed,)
        return np.random.default_rng([*seed, stream])


@dataclass
class Layer:
    depth: float
    box: tuple  # (u0, u1, v0, v1) in left-image pixel coordinates
    base: np.ndarray
    waves: list  # (channel amplitudes(3), fu, fv, phase)

    def texture(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.broadcast_to(self.base[:, None, None], (3, *u.shape)).copy()
        for amp, fu, fv, phase in self.waves:
            out += amp[:, None, None] * np.sin(2 * np.pi * (fu * u + fv * v) + phase)
        return out

    def covers(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        u0, u1, v0, v1 = self.box
        return (u >= u0) & (u < u1) & (v >= v0) & (v < v1)


@dataclass
class Sample:
    left: torch.Tensor        # (1, 3, H, W)
    right: torch.Tensor
    gt_left: torch.Tensor     # (1, 1, H, W) disparity, pixels
    gt_right: torch.Tensor
    points: np.ndarray        # (n, 3) left-camera coordinates
    sd_left: SparseDisparityMap
    sd_right: SparseDisparityMap
    rig: StereoRig
    nonoccluded_right: torch.Tensor | None = field(default=None, compare=False)

    @property
    def shape(self):
        return tuple(self.left.shape[2:])


def _random_layers(spec: SceneSpec, rng: np.random.Generator) -> list:
    rig = spec.rig
    lo, hi = spec.depth_range
    depths = np.sort(rng.uniform(lo, hi * 0.8, size=spec.n_layers - 1))[::-1]
    depths = [hi, *depths.tolist()]
    if len(set(depths)) != len(depths):
        raise ValueError("layer depths collided; pick another seed")
    layers = []
    for i, z in enumerate(depths):
        if i == 0:
            box = (-math.inf, math.inf, -math.inf, math.inf)
        else:
            bottom = rig.cy + rig.fy * CAMERA_HEIGHT / z
            height_m = rng.uniform(1.0, 3.5)
            width_m = rng.uniform(1.0, 5.0)
            centre_x = rng.uniform(-0.6, 0.6) * z * rig.width / (2 * rig.fx)
            u_c = rig.fx * centre_x / z + rig.cx
            half_w = rig.fx * width_m / (2 * z)
            box = (u_c - half_w, u_c + half_w, bottom - rig.fy * height_m / z, bottom)
        base = rng.uniform(0.3, 0.7, size=3)
        waves = []
        for _ in range(spec.n_waves):
            f = rng.uniform(0.02, spec.max_frequency)
            theta = rng.uniform(0, np.pi)
            amp = rng.uniform(*spec.amplitude, size=3)
            waves.append((amp, f * np.cos(theta), f * np.sin(theta), rng.uniform(0, 2 * np.pi)))
        layers.append(Layer(z, box, base, waves))
    return layers


def _render(layers, rig: StereoRig, view: str):
    """Nearest-first composite; returns image (3,H,W), disparity (H,W), layer ids."""
    h, w = rig.height, rig.width
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    image = np.zeros((3, h, w))
    disp = np.zeros((h, w))
    ids = np.full((h, w), -1)
    for idx, layer in enumerate(layers):  # far to near, later layers overwrite
        d = depth_to_disparity(layer.depth, rig)
        u_left = u + d if view == "right" else u
        hit = layer.covers(u_left, v)
        image[:, hit] = layer.texture(u_left, v)[:, hit]
        disp[hit] = d
        ids[hit] = idx
    return np.clip(image, 0.0, 1.0), disp, ids


def _visible_layer(layers, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    ids = np.full(u.shape, -1)
    for idx, layer in enumerate(layers):
        ids[layer.covers(u, v)] = idx
    return ids


def texture_gradient(image: np.ndarray) -> np.ndarray:
    gray = image.mean(axis=0)
    gy, gx = np.gradient(gray)
    return np.hypot(gx, gy)


class VOSampler:
    """VO-like point picker for one sequence.

    The monocular model draws its global scale error once, at construction,
    and applies it to every point of every frame of the sequence.
    """

    def __init__(self, rho: float = 0.005, noise_model: str = "stereo",
                 rng: np.random.Generator | None = None, sigma: float | None = None):
        if not 0 < rho < 0.05:
            raise ValueError(f"density rho must lie in (0, 0.05), got {rho}")
        if noise_model not in NOISE_SIGMA:
            raise ValueError(f"noise model must be one of {sorted(NOISE_SIGMA)}")
        self.rho = rho
        self.noise_model = noise_model
        self.sigma = NOISE_SIGMA[noise_model] if sigma is None else sigma
        rng = np.random.default_rng(0) if rng is None else rng
        self.scale = float(rng.uniform(*MONO_SCALE_RANGE)) if noise_model == "mono" else 1.0

    def count(self, height: int, width: int) -> int:
        return math.ceil(self.rho * height * width - 1e-9)

    def sample(self, image: np.ndarray, gt_disp: np.ndarray, rig: StereoRig,
               rng: np.random.Generator) -> np.ndarray:
        h, w = gt_disp.shape
        n = self.count(h, w)
        g = texture_gradient(image).ravel()
        weights = g + 0.05 * (g.mean() + 1e-12)
        idx = rng.choice(h * w, size=n, replace=False, p=weights / weights.sum())
        rows, cols = np.divmod(idx, w)
        z = rig.fx * rig.baseline / gt_disp[rows, cols]
        if self.sigma > 0:
            z = z * (1.0 + self.sigma * rng.standard_normal(n))
        z = np.maximum(z * self.scale, 1e-3)
        x = (cols - rig.cx) * z / rig.fx
        y = (rows - rig.cy) * z / rig.fy
        return np.stack([x, y, z], axis=1)


def sample_vo_points(sample: Sample, rho: float, noise_model: str = "stereo",
                     rng: np.random.Generator | None = None, sigma: float | None = None,
                     sampler: VOSampler | None = None) -> np.ndarray:
    rng = np.random.default_rng(0) if rng is None else rng
    sampler = sampler or VOSampler(rho, noise_model, rng, sigma)
    image = sample.left[0].double().numpy()
    return sampler.sample(image, sample.gt_left[0, 0].double().numpy(), sample.rig, rng)


def generate_sample(spec: SceneSpec, rho: float = 0.005, noise_model: str = "stereo",
                    sampler: VOSampler | None = None, dtype=torch.float32) -> Sample:
    """Deterministic function of ``spec`` (and the sampler's sequence scale)."""
    rng = spec.rng(0)
    rig = spec.rig
    layers = _random_layers(spec, rng)
    left, disp_l, _ = _render(layers, rig, "left")
    right, disp_r, ids_r = _render(layers, rig, "right")

    h, w = rig.height, rig.width
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    src = np.clip(u + disp_r, 0, w - 1)
    lo = _visible_layer(layers, np.floor(src), v)
    hi = _visible_layer(layers, np.minimum(np.floor(src) + 1, w - 1), v)
    inside = (u + disp_r) <= w - 1
    nonocc = (lo == ids_r) & (hi == ids_r) & inside

    sampler = sampler or VOSampler(rho, noise_model, spec.rng(1))
    points = sampler.sample(left, disp_l, rig, spec.rng(2))

    def t(a):
        return torch.as_tensor(np.ascontiguousarray(a), dtype=dtype).unsqueeze(0)

    return Sample(
        left=t(left), right=t(right),
        gt_left=t(disp_l[None]), gt_right=t(disp_r[None]),
        points=points,
        sd_left=rasterize(points, rig, "left", dtype),
        sd_right=rasterize(points, rig, "right", dtype),
        rig=rig,
        nonoccluded_right=t(nonocc[None].astype(np.float64)),
    )


def generate_dataset(count: int, seed: int = 0, rho: float = 0.005, noise_model: str = "stereo",
                     size: tuple = (64, 128), dtype=torch.float32, **scene) -> list:
    """``count`` samples of one sequence (one shared VO sampler).

    Extra keyword arguments go to every ``SceneSpec``.
    """
    h, w = size
    sampler = VOSampler(rho, noise_model, np.random.default_rng([seed, 2**31]))
    samples = []
    for i in range(count):
        rng = np.random.default_rng([seed, i, 2**30])
        spec = SceneSpec(seed=(seed, i), height=h, width=w, n_layers=int(rng.integers(3, 7)), **scene)
        samples.append(generate_sample(spec, rho, noise_model, sampler, dtype))
    return samples


# -- file format ------------------------------------------------------------

_HEADER = struct.Struct("<5sII5d")


def write_sample(path, sample: Sample) -> None:
    h, w = sample.shape
    rig = sample.rig
    planes = [sample.left[0], sample.right[0], sample.gt_left[0], sample.gt_right[0],
              sample.sd_left.values[0], sample.sd_left.mask[0],
              sample.sd_right.values[0], sample.sd_right.mask[0]]
    body = np.concatenate([p.double().numpy().reshape(-1, h, w) for p in planes]).astype("<f4")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, h, w, rig.fx, rig.fy, rig.cx, rig.cy, rig.baseline))
        f.write(body.tobytes())


def read_sample(path, dtype=torch.float32) -> Sample:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:5] != MAGIC:
        raise ValueError(f"{path}: not a VODP1 sample file")
    magic, h, w, fx, fy, cx, cy, b = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 12 * h * w * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    planes = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(12, h, w)
    planes = torch.as_tensor(planes.astype(np.float64), dtype=dtype)

    def p(i, j):
        return planes[i:j].unsqueeze(0).clone()

    rig = StereoRig(fx, fy, cx, cy, b, w, h)
    return Sample(left=p(0, 3), right=p(3, 6), gt_left=p(6, 7), gt_right=p(7, 8),
                  points=np.zeros((0, 3)),
                  sd_left=SparseDisparityMap(p(8, 9), p(9, 10)),
                  sd_right=SparseDisparityMap(p(10, 11), p(11, 12)), rig=rig)


def write_dataset(directory, samples) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, s in enumerate(samples):
        name = f"sample_{i:06d}.vodp"
        write_sample(directory / name, s)
        names.append(name)
    (directory / MANIFEST).write_text("".join(n + "\n" for n in names))
    return names


def load_dataset(directory, dtype=torch.float32) -> list:
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {directory}")
    names = [ln.strip() for ln in manifest.read_text().splitlines() if ln.strip()]
    return [read_sample(directory / n, dtype) for n in names]
