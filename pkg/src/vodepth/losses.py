"""Stereo self-supervision, sparse-prior consistency and their weighted total."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch

from . import tensor as T
from .geometry import SparseDisparityMap
from .pyramid import NUM_SCALES, DisparityOutputs

C1 = 0.01 ** 2
C2 = 0.03 ** 2


@dataclass
class LossWeights:
    alpha_st: float = 1.0
    alpha_in: float = 5.0
    alpha_out: float = 2.0
    beta_ap: float = 1.0
    beta_lr: float = 1.0
    beta_occ: float = 0.01
    beta_ds_base: float = 0.1
    gamma: float = 0.85

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be non-negative")

    def beta_ds(self, r: int) -> float:
        return self.beta_ds_base / r


@dataclass
class LossBreakdown:
    """Named scalar terms plus their weighted total (all tensors)."""

    terms: dict = field(default_factory=dict)
    st_per_scale: list = field(default_factory=list)
    total: torch.Tensor = None

    def as_dict(self) -> dict:
        out = {k: float(v.detach()) for k, v in self.terms.items()}
        out["total"] = float(self.total.detach())
        return out

    def first_non_finite(self):
        for k, v in self.terms.items():
            if not torch.isfinite(v).all():
                return k
        if self.total is not None and not torch.isfinite(self.total).all():
            return "total"
        return None


def _same_shape(a, b, name):
    if a.shape != b.shape:
        raise ValueError(f"{name}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def ssim(a, b):
    """Per-pixel single-scale SSIM from 3x3 local means, clipped to [-1, 1]."""
    _same_shape(a, b, "ssim")
    mu_a = T.mean_pool3x3(a)
    mu_b = T.mean_pool3x3(b)
    var_a = T.mean_pool3x3(a * a) - mu_a * mu_a
    var_b = T.mean_pool3x3(b * b) - mu_b * mu_b
    cov = T.mean_pool3x3(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    return (num / den).clamp(-1.0, 1.0)


def appearance_loss(image, reconstructed, gamma: float = 0.85):
    _same_shape(image, reconstructed, "appearance_loss")
    dssim = (1.0 - ssim(image, reconstructed)) / 2.0
    l1 = T.absolute(image - reconstructed)
    return T.mean(gamma * dssim + (1.0 - gamma) * l1)


def smoothness_loss(disp, image):
    """Edge-aware L1 on forward-difference disparity gradients."""
    dx_d = disp[..., :, 1:] - disp[..., :, :-1]
    dy_d = disp[..., 1:, :] - disp[..., :-1, :]
    dx_i = T.absolute(image[..., :, 1:] - image[..., :, :-1]).mean(dim=1, keepdim=True)
    dy_i = T.absolute(image[..., 1:, :] - image[..., :-1, :]).mean(dim=1, keepdim=True)
    return T.mean(T.absolute(dx_d) * T.exp(-dx_i)) + T.mean(T.absolute(dy_d) * T.exp(-dy_i))


def lr_consistency_loss(d_this, d_other, direction: int = -1):
    """L1 between a disparity map and the other view's map sampled through it.

    For the left map use ``direction=-1`` (a left pixel at x sees the right
    image at x - d); for the right map use ``+1``.
    """
    _same_shape(d_this, d_other, "lr_consistency_loss")
    projected = T.bilinear_warp(d_other, d_this, direction)
    return T.mean(T.absolute(d_this - projected))


def occlusion_loss(disp):
    return T.mean(disp)


SPARSE_NORMS = ("valid", "all")


def masked_l1(pred, sd: SparseDisparityMap, norm: str = "valid"):
    """L1 on valid pixels, divided by the valid count (``"valid"``) or by all pixels (``"all"``).

    An empty mask gives 0 either way.
    """
    _same_shape(pred, sd.values, "masked_l1")
    if norm not in SPARSE_NORMS:
        raise ValueError(f"norm must be one of {SPARSE_NORMS}, got {norm!r}")
    count = sd.mask.sum()
    if count.item() == 0:
        return (pred * 0.0).sum()
    err = (sd.mask * T.absolute(pred - sd.values)).sum()
    return err / count if norm == "valid" else err / sd.mask.numel()


def inner_loss(dd, sd: SparseDisparityMap, norm: str = "valid"):
    return masked_l1(dd, sd, norm)


def outer_loss(d_final, sd: SparseDisparityMap, norm: str = "valid"):
    return masked_l1(d_final, sd, norm)


def downsample_sparse(sd: SparseDisparityMap, r: int) -> SparseDisparityMap:
    """Valid-aware r x r pooling; disparities shrink by 1/r with the width."""
    if r == 1:
        return sd
    count = T.avg_pool(sd.mask, r) * (r * r)
    total = T.avg_pool(sd.values * sd.mask, r) * (r * r)
    mask = (count > 0).to(sd.mask.dtype)
    values = torch.where(count > 0, total / count.clamp(min=1.0), torch.zeros_like(total)) / r
    return SparseDisparityMap(values, mask)


def stereo_terms(d_left, d_right, left, right, weights: LossWeights, r: int):
    """Per-view terms at one scale and their bracketed weighted sum."""
    recon_left = T.bilinear_warp(right, d_left, -1)
    recon_right = T.bilinear_warp(left, d_right, +1)
    parts = {
        "ap_L": appearance_loss(left, recon_left, weights.gamma),
        "ap_R": appearance_loss(right, recon_right, weights.gamma),
        "ds_L": smoothness_loss(d_left, left),
        "ds_R": smoothness_loss(d_right, right),
        "lr_L": lr_consistency_loss(d_left, d_right, -1),
        "lr_R": lr_consistency_loss(d_right, d_left, +1),
        "occ_L": occlusion_loss(d_left),
        "occ_R": occlusion_loss(d_right),
    }
    st = (weights.beta_ap * (parts["ap_L"] + parts["ap_R"])
          + weights.beta_ds(r) * (parts["ds_L"] + parts["ds_R"])
          + weights.beta_lr * (parts["lr_L"] + parts["lr_R"])
          + weights.beta_occ * (parts["occ_L"] + parts["occ_R"]))
    return st, parts


def combine(st_per_scale, inner_terms, outer_terms, weights: LossWeights):
    """alpha_st * sum_s L_st + alpha_in * sum(inner) + alpha_out * sum(outer)."""
    total = weights.alpha_st * sum(st_per_scale)
    total = total + weights.alpha_in * sum(inner_terms) + weights.alpha_out * sum(outer_terms)
    return total


def total_loss(outputs: DisparityOutputs, left, right, weights: LossWeights,
               dd_left=None, dd_right=None, sd_left=None, sd_right=None,
               outer_all_scales: bool = False, sparse_norm: str = "valid") -> LossBreakdown:
    """Full training objective over the four output scales.

    Inner terms are added for each DD given; outer terms for each SD given.
    With ``outer_all_scales`` the outer term is also applied at coarse scales
    against valid-aware pooled SD.
    """
    if outputs.num_scales != NUM_SCALES:
        raise ValueError(f"total_loss expects {NUM_SCALES} scales, got {outputs.num_scales}")
    bd = LossBreakdown()
    sums = {}
    for s in range(NUM_SCALES):
        r = 2 ** s
        st, parts = stereo_terms(outputs.d_lr[s], outputs.d_rl[s],
                                 T.avg_pool(left, r), T.avg_pool(right, r), weights, r)
        bd.st_per_scale.append(st)
        for k, v in parts.items():
            sums[k] = sums[k] + v if k in sums else v
    bd.terms["st"] = sum(bd.st_per_scale)
    bd.terms.update(sums)

    inner, outer = [], []
    for tag, dd, sd, d in (("L", dd_left, sd_left, outputs.d_lr), ("R", dd_right, sd_right, outputs.d_rl)):
        if dd is not None and sd is not None:
            bd.terms[f"in_{tag}"] = inner_loss(dd, sd, sparse_norm)
            inner.append(bd.terms[f"in_{tag}"])
        if sd is not None:
            term = outer_loss(d[0], sd, sparse_norm)
            if outer_all_scales:
                for s in range(1, NUM_SCALES):
                    term = term + outer_loss(d[s], downsample_sparse(sd, 2 ** s), sparse_norm)
            bd.terms[f"out_{tag}"] = term
            outer.append(term)
    bd.total = combine(bd.st_per_scale, inner, outer, weights)
    return bd
