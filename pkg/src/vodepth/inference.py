"""Deployment path: one left view plus its sparse prior, optional flip blending."""

from __future__ import annotations

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint
from .geometry import SparseDisparityMap, disparity_to_depth
from .metrics import MetricsReport, compute_metrics, mean_report


def blend_weights(width: int, dtype=torch.float64):
    """Left-border weight ramp: 1 over the first 5% of the width, 0 past 10%."""
    x = torch.linspace(0.0, 1.0, width, dtype=dtype)
    return 1.0 - (20.0 * (x - 0.05)).clamp(0.0, 1.0)


def post_process(direct, flipped_back):
    """Blend a direct disparity map with the flipped-run one (flipped back).

    The left border comes from the flipped run, the right border from the
    direct run, and the centre is their mean.
    """
    w = direct.shape[-1]
    l_mask = blend_weights(w, direct.dtype).view(*([1] * (direct.dim() - 1)), w)
    r_mask = l_mask.flip(-1)
    mean = 0.5 * (direct + flipped_back)
    return r_mask * direct + l_mask * flipped_back + (1.0 - l_mask - r_mask) * mean


def _as_model(model_or_ckpt):
    if isinstance(model_or_ckpt, (str, bytes)) or hasattr(model_or_ckpt, "__fspath__"):
        model_or_ckpt = load_checkpoint(model_or_ckpt)
    if isinstance(model_or_ckpt, Checkpoint):
        return model_or_ckpt.build_model()
    return model_or_ckpt


@torch.no_grad()
def infer(model, image, sd_left: SparseDisparityMap | None = None, post_process_output: bool = False):
    """Left-view disparity (N, 1, H, W); ``model`` may be a checkpoint or its path."""
    model = _as_model(model)
    model.eval()
    dtype = model.dtype
    image = image.to(dtype)
    if sd_left is None:
        sd_left = SparseDisparityMap.empty(*image.shape[2:], dtype=dtype)
        if image.shape[0] > 1:
            sd_left = SparseDisparityMap(sd_left.values.expand(image.shape[0], -1, -1, -1),
                                         sd_left.mask.expand(image.shape[0], -1, -1, -1))
    sd_left = sd_left.to(dtype)
    disp = model.predict(image, sd_left)
    if post_process_output:
        flipped = model.predict(image.flip(-1), sd_left.flipped()).flip(-1)
        disp = post_process(disp, flipped)
    return disp.contiguous()


def evaluate(model, samples, post_process_output: bool = False) -> MetricsReport:
    """Metrics over ``samples`` against their dense ground truth."""
    model = _as_model(model)
    reports = []
    for s in samples:
        disp = infer(model, s.left, s.sd_left, post_process_output)[0, 0].double().numpy()
        gt = s.gt_left[0, 0].double().numpy()
        valid = gt > 0
        gt_depth = np.zeros_like(gt)
        gt_depth[valid] = disparity_to_depth(gt[valid], s.rig)
        pred_depth = disparity_to_depth(np.maximum(disp, 1e-6), s.rig)
        reports.append(compute_metrics(pred_depth, gt_depth))
    return mean_report(reports)
