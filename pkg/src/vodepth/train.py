"""Training loop, augmentation and the per-step loss log."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from . import tensor as T
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .geometry import SparseDisparityMap
from .model import Batch, VODepthNet
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


def flip_pair(left, right, sd_left: SparseDisparityMap, sd_right: SparseDisparityMap):
    """Mirror both views and swap their roles, keeping disparities positive."""
    return right.flip(-1), left.flip(-1), sd_right.flipped(), sd_left.flipped()


def color_augment(image, gamma: float, brightness: float, colors):
    colors = torch.as_tensor(colors, dtype=image.dtype).view(1, -1, 1, 1)
    return ((image ** gamma) * brightness * colors).clamp(0.0, 1.0)


def augment(left, right, rng: np.random.Generator, sd_left=None, sd_right=None):
    """Random flip-and-swap and identical colour jitter, each with p = 0.5."""
    if sd_left is None:
        sd_left = SparseDisparityMap.empty(*left.shape[2:], dtype=left.dtype)
    if sd_right is None:
        sd_right = SparseDisparityMap.empty(*right.shape[2:], dtype=right.dtype)
    if rng.uniform() < 0.5:
        left, right, sd_left, sd_right = flip_pair(left, right, sd_left, sd_right)
    if rng.uniform() < 0.5:
        gamma = rng.uniform(0.8, 1.2)
        brightness = rng.uniform(0.5, 2.0)
        colors = rng.uniform(0.8, 1.2, size=left.shape[1])
        left = color_augment(left, gamma, brightness, colors)
        right = color_augment(right, gamma, brightness, colors)
    return left, right, sd_left, sd_right


def make_batch(samples, dtype, rng: np.random.Generator | None = None) -> Batch:
    parts = ([], [], [], [], [], [])
    for s in samples:
        left, right, sdl, sdr = s.left, s.right, s.sd_left, s.sd_right
        if rng is not None:
            left, right, sdl, sdr = augment(left, right, rng, sdl, sdr)
        for bucket, t in zip(parts, (left, right, sdl.values, sdl.mask, sdr.values, sdr.mask)):
            bucket.append(t)
    left, right, lv, lm, rv, rm = (torch.cat(p).to(dtype) for p in parts)
    return Batch(left, right, SparseDisparityMap(lv, lm), SparseDisparityMap(rv, rm))


@dataclass
class TrainResult:
    model: VODepthNet
    config: TrainConfig
    optimizer: AdamState
    step: int
    log: list = field(default_factory=list)
    lr_trace: list = field(default_factory=list)  # (epoch, lr)


def _epoch_order(config: TrainConfig, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([config.seed, epoch, 7]).permutation(n)


def _batch_rng(config: TrainConfig, epoch: int, b: int):
    if not config.augment:
        return None
    return np.random.default_rng([config.seed, epoch, b, 11])


def train(config: TrainConfig, dataset, log_path=None, checkpoint_path=None,
          resume: Checkpoint | str | None = None, max_steps: int | None = None) -> TrainResult:
    """Optimise the full pipeline on ``dataset`` (a list of samples).

    Every random choice is derived from ``(config.seed, epoch, batch)``, so a
    run resumed from a checkpoint replays exactly what the unbroken run would
    have done. ``max_steps`` stops early (counting from step 0).
    """
    if not dataset:
        raise ValueError("training needs a non-empty dataset")
    torch.set_num_threads(1)
    dtype = T.PRECISION[config.precision]
    model = VODepthNet.from_config(config)
    opt = AdamState(config.beta1, config.beta2, config.eps)
    step = 0
    if resume is not None:
        ckpt = load_checkpoint(resume) if not isinstance(resume, Checkpoint) else resume
        ckpt.apply(model)
        opt, step = ckpt.optimizer, ckpt.step
    params = model.named_trainables()
    max_steps = config.max_steps if max_steps is None else max_steps

    n = len(dataset)
    per_epoch = math.ceil(n / config.batch_size)
    result = TrainResult(model, config, opt, step)
    writer = None
    log_file = open(log_path, "a" if resume is not None else "w", newline="") if log_path else None
    try:
        for epoch in range(step // per_epoch, config.epochs):
            lr = config.lr_at(epoch)
            result.lr_trace.append((epoch, lr))
            order = _epoch_order(config, epoch, n)
            for b in range(step - epoch * per_epoch, per_epoch):
                if max_steps is not None and step >= max_steps:
                    break
                idx = order[b * config.batch_size:(b + 1) * config.batch_size]
                batch = make_batch([dataset[i] for i in idx], dtype, _batch_rng(config, epoch, b))
                T.zero_grad(params.values())
                bd = model.loss(batch, config.weights, config.outer_all_scales, config.sparse_norm)
                bad = bd.first_non_finite()
                if bad is not None:
                    raise TrainingDiverged(f"step {step}: loss term {bad!r} is not finite")
                T.backward(bd.total)
                adam_step(params, opt, lr)
                step += 1
                row = {"step": step, "epoch": epoch, "lr": lr, **bd.as_dict()}
                result.log.append(row)
                if log_file is not None:
                    if writer is None:
                        writer = csv.DictWriter(log_file, fieldnames=list(row))
                        if log_file.tell() == 0:
                            writer.writeheader()
                    writer.writerow(row)
                result.step = step
            else:
                log.info("epoch %d done, lr=%g", epoch, lr)
                continue
            break
    finally:
        if log_file is not None:
            log_file.close()
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model, config, opt, step)
    return result


def read_log(path) -> list:
    with open(path, newline="") as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]
