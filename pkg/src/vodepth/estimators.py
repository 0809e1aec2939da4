"""scikit-learn style wrappers around training and inference."""

from __future__ import annotations

import math

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .geometry import SparseDisparityMap
from .inference import evaluate, infer
from .losses import LossWeights
from .pyramid import CHANNELS
from .train import train
from .validation import check_samples


class VODepthEstimator(BaseEstimator):
    """Self-supervised monocular disparity network with a VO prior.

    ``fit`` trains on stereo samples carrying sparse VO maps; ``predict``
    uses only the left image and its sparse map. ``ablation`` takes any of
    ``no_prior``, ``no_autoencoder``, ``no_skip``, ``no_symmetry``.
    """

    def __init__(self, epochs=30, batch_size=8, lr=1e-4, augment=True, ablation=(),
                 vo_noise="stereo", weights=None, seed=0, precision="train",
                 post_process=False, max_steps=None):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.augment = augment
        self.ablation = ablation
        self.vo_noise = vo_noise
        self.weights = weights
        self.seed = seed
        self.precision = precision
        self.post_process = post_process
        self.max_steps = max_steps

    def _config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           augment=self.augment, ablation=self.ablation, vo_noise=self.vo_noise,
                           weights=self.weights or LossWeights(), seed=self.seed,
                           precision=self.precision, max_steps=self.max_steps)

    def fit(self, X, y=None, log_path=None):
        X = check_samples(X, min_divisor=2 ** (len(CHANNELS) - 1))
        self.config_ = self._config()
        result = train(self.config_, X, log_path=log_path)
        self.model_ = result.model
        self.optimizer_ = result.optimizer
        self.n_steps_ = result.step
        self.log_ = result.log
        return self

    def predict(self, X):
        """Left-view disparity maps, shape (n_samples, H, W)."""
        check_is_fitted(self, "model_")
        X = check_samples(X)
        return np.stack([
            infer(self.model_, s.left, s.sd_left, self.post_process)[0, 0].double().numpy() for s in X
        ])

    def evaluate(self, X):
        check_is_fitted(self, "model_")
        return evaluate(self.model_, check_samples(X), self.post_process)

    def score(self, X, y=None):
        """Negative Abs Rel, so that larger is better."""
        return -self.evaluate(X).abs_rel

    def save(self, path):
        check_is_fitted(self, "model_")
        save_checkpoint(path, self.model_, self.config_, self.optimizer_, self.n_steps_)

    @classmethod
    def load(cls, path) -> "VODepthEstimator":
        ckpt = load_checkpoint(path)
        c = ckpt.config
        est = cls(epochs=c.epochs, batch_size=c.batch_size, lr=c.lr, augment=c.augment,
                  ablation=c.ablation, vo_noise=c.vo_noise, weights=c.weights, seed=c.seed,
                  precision=c.precision, max_steps=c.max_steps)
        est.config_ = c
        est.model_ = ckpt.build_model()
        est.optimizer_ = ckpt.optimizer
        est.n_steps_ = ckpt.step
        est.log_ = []
        return est


class SparseDensifier(BaseEstimator, TransformerMixin):
    """The sparse autoencoder trained on its own with the inner loss.

    On its own the autoencoder tolerates (and needs) a larger step than the
    full network, hence the 1e-3 default.

    ``transform`` maps sparse maps (or samples) to dense DD maps.
    """

    def __init__(self, steps=2000, batch_size=8, lr=1e-3, symmetric=True, augment=False,
                 seed=0, precision="train"):
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.symmetric = symmetric
        self.augment = augment
        self.seed = seed
        self.precision = precision

    def fit(self, X, y=None):
        X = check_samples(X)
        per_epoch = math.ceil(len(X) / self.batch_size)
        self.config_ = TrainConfig(
            epochs=math.ceil(self.steps / per_epoch), batch_size=self.batch_size, lr=self.lr,
            augment=self.augment, ablation=() if self.symmetric else ("no_symmetry",),
            weights=LossWeights(alpha_st=0.0, alpha_out=0.0), seed=self.seed,
            precision=self.precision, max_steps=self.steps)
        result = train(self.config_, X)
        self.model_ = result.model
        self.log_ = result.log
        return self

    @property
    def autoencoder_(self):
        check_is_fitted(self, "model_")
        return self.model_.autoencoder

    @torch.no_grad()
    def transform(self, X):
        """DD maps of shape (n, H, W) for samples or SparseDisparityMap objects."""
        ae = self.autoencoder_
        dtype = self.model_.dtype
        out = []
        for item in X:
            sd = item.sd_left if not isinstance(item, SparseDisparityMap) else item
            dd, _ = ae(sd.values.to(dtype), sd.mask.to(dtype))
            out.append(dd[0, 0].double().numpy())
        return np.stack(out)
