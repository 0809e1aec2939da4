"""Monocular depth estimation guided by sparse visual-odometry points."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .estimators import SparseDensifier, VODepthEstimator
from .geometry import (SparseDisparityMap, StereoRig, depth_to_disparity, disparity_to_depth,
                       project_point, rasterize)
from .inference import evaluate, infer
from .losses import LossBreakdown, LossWeights, total_loss
from .metrics import MetricsReport, compute_metrics
from .model import VODepthNet
from .synth import Sample, SceneSpec, generate_dataset, generate_sample, sample_vo_points
from .train import train

__all__ = [
    "Checkpoint", "LossBreakdown", "LossWeights", "MetricsReport", "Sample", "SceneSpec",
    "SparseDensifier", "SparseDisparityMap", "StereoRig", "TrainConfig", "VODepthEstimator",
    "VODepthNet", "compute_metrics", "depth_to_disparity", "disparity_to_depth", "evaluate",
    "generate_dataset", "generate_sample", "infer", "load_checkpoint", "project_point",
    "rasterize", "sample_vo_points", "save_checkpoint", "total_loss", "train",
]
