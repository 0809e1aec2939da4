"""The full network: sparse autoencoder -> estimator -> skip residual."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from . import tensor as T
from .geometry import SparseDisparityMap
from .losses import LossBreakdown, LossWeights, combine, inner_loss, total_loss
from .pyramid import DisparityOutputs, PyramidEstimator, compose_outputs
from .skip import SkipModule
from .sparse_ae import SparseAutoencoder


# NHWC storage roughly doubles single-core convolution throughput
CHANNELS_LAST = torch.channels_last


def _nhwc(t):
    return t.contiguous(memory_format=CHANNELS_LAST)


def _nhwc_sd(sd):
    return None if sd is None else SparseDisparityMap(_nhwc(sd.values), _nhwc(sd.mask))


@dataclass
class Batch:
    left: torch.Tensor
    right: torch.Tensor
    sd_left: SparseDisparityMap
    sd_right: SparseDisparityMap


class VODepthNet(torch.nn.Module):
    """Monocular disparity network fed with densified VO priors.

    The ablation flags disconnect parts of the pipeline: without the prior
    the estimator sees an all-zero fourth channel; without the autoencoder it
    sees the raw sparse disparities; without symmetry the right view's prior
    branch is never run.
    """

    def __init__(self, use_prior=True, use_autoencoder=True, use_skip=True, symmetric=True,
                 seed: int = 0, dtype=torch.float32):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.use_prior = use_prior
        self.use_autoencoder = use_prior and use_autoencoder
        self.use_skip = use_prior and use_skip
        self.symmetric = symmetric
        self.autoencoder = SparseAutoencoder(gen, torch.float64)
        self.skip = SkipModule(gen, torch.float64)
        self.estimator = PyramidEstimator(generator=gen, dtype=torch.float64)
        self.to(dtype=dtype, memory_format=CHANNELS_LAST)

    @classmethod
    def from_config(cls, config) -> "VODepthNet":
        return cls(config.use_prior, config.use_autoencoder, config.use_skip, config.symmetric,
                   seed=config.seed, dtype=T.PRECISION[config.precision])

    @property
    def dtype(self):
        return self.estimator.enc0a.weights.dtype

    def named_trainables(self) -> dict:
        """Parameters the active configuration can actually move."""
        out = {}
        for name, p in self.named_parameters():
            module = name.split(".", 1)[0]
            if module == "autoencoder" and not self.use_autoencoder:
                continue
            if module == "skip" and not self.use_skip:
                continue
            out[name] = p
        return out

    def prior(self, sd: SparseDisparityMap):
        """(estimator/skip input, DD or None) for one view."""
        if not self.use_prior:
            return torch.zeros_like(sd.values), None
        if not self.use_autoencoder:
            return sd.values, None
        dd, _ = self.autoencoder(sd.values, sd.mask)
        return dd, dd

    def _priors(self, sd_left, sd_right):
        if self.use_autoencoder and sd_right is not None:
            n = sd_left.values.shape[0]
            both, _ = self.autoencoder(torch.cat([sd_left.values, sd_right.values]),
                                       torch.cat([sd_left.mask, sd_right.mask]))
            return (both[:n], both[:n]), (both[n:], both[n:])
        left = self.prior(sd_left)
        right = self.prior(sd_right) if sd_right is not None else (None, None)
        return left, right

    def forward(self, image, sd_left: SparseDisparityMap, sd_right: SparseDisparityMap | None = None):
        """Returns (final outputs, pre-residual outputs, dd_left, dd_right)."""
        if not self.symmetric:
            sd_right = None
        image, sd_left, sd_right = _nhwc(image), _nhwc_sd(sd_left), _nhwc_sd(sd_right)
        (prior_l, dd_l), (prior_r, dd_r) = self._priors(sd_left, sd_right)
        pre = self.estimator(image, prior_l)
        res_l = res_r = None
        if self.use_skip:
            if prior_r is not None:
                n = prior_l.shape[0]
                both = self.skip(torch.cat([prior_l, prior_r]))
                res_l, res_r = both[:n], both[n:]
            else:
                res_l = self.skip(prior_l)
        final = compose_outputs(pre, res_l, res_r)
        return final, pre, dd_l, dd_r

    def loss(self, batch: Batch, weights: LossWeights, outer_all_scales=False,
             sparse_norm: str = "valid") -> LossBreakdown:
        batch = Batch(_nhwc(batch.left), _nhwc(batch.right), _nhwc_sd(batch.sd_left), _nhwc_sd(batch.sd_right))
        sd_r = batch.sd_right if self.symmetric else None
        if weights.alpha_st == 0 and weights.alpha_out == 0:
            return self._inner_only(batch, sd_r, weights, sparse_norm)
        final, _, dd_l, dd_r = self(batch.left, batch.sd_left, sd_r)
        use_sd = self.use_prior
        return total_loss(final, batch.left, batch.right, weights,
                          dd_left=dd_l, dd_right=dd_r,
                          sd_left=batch.sd_left if use_sd else None,
                          sd_right=sd_r if use_sd else None,
                          outer_all_scales=outer_all_scales, sparse_norm=sparse_norm)

    def _inner_only(self, batch, sd_r, weights, sparse_norm="valid") -> LossBreakdown:
        # the estimator only feeds zero-weighted terms, so it is skipped
        bd = LossBreakdown()
        (_, dd_l), (_, dd_r) = self._priors(batch.sd_left, sd_r)
        inner = []
        for tag, dd, sd in (("L", dd_l, batch.sd_left), ("R", dd_r, sd_r)):
            if dd is not None:
                bd.terms[f"in_{tag}"] = inner_loss(dd, sd, sparse_norm)
                inner.append(bd.terms[f"in_{tag}"])
        bd.total = combine([], inner, [], weights)
        return bd

    @torch.no_grad()
    def predict(self, image, sd_left: SparseDisparityMap):
        """Full-resolution left disparity from one view (deployment path)."""
        final, _, _, _ = self(image, sd_left, None)
        return final.d_lr[0]
