"""Training configuration and its flat ``key=value`` file form."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .losses import SPARSE_NORMS, LossWeights

ABLATIONS = ("no_prior", "no_autoencoder", "no_skip", "no_symmetry")
VO_NOISE = ("stereo", "mono")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    augment: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    ablation: tuple = ()
    vo_noise: str = "stereo"
    seed: int = 0
    precision: str = "train"
    outer_all_scales: bool = False
    sparse_norm: str = "valid"
    max_steps: int | None = None

    def __post_init__(self):
        if isinstance(self.ablation, str):
            self.ablation = tuple(a for a in self.ablation.split(",") if a)
        self.ablation = tuple(self.ablation)
        for a in self.ablation:
            if a not in ABLATIONS:
                raise ValueError(f"unknown ablation switch {a!r}; choose from {ABLATIONS}")
        if self.vo_noise not in VO_NOISE:
            raise ValueError(f"vo_noise must be one of {VO_NOISE}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.sparse_norm not in SPARSE_NORMS:
            raise ValueError(f"sparse_norm must be one of {SPARSE_NORMS}")
        if self.precision not in ("train", "test"):
            raise ValueError("precision must be 'train' or 'test'")
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)

    @property
    def use_prior(self) -> bool:
        return "no_prior" not in self.ablation

    @property
    def use_autoencoder(self) -> bool:
        return self.use_prior and "no_autoencoder" not in self.ablation

    @property
    def use_skip(self) -> bool:
        return self.use_prior and "no_skip" not in self.ablation

    @property
    def symmetric(self) -> bool:
        return "no_symmetry" not in self.ablation

    def milestones(self) -> tuple:
        """Epochs (0-based) from which the learning rate is halved."""
        first = math.ceil(3 * self.epochs / 5)
        second = max(math.ceil(4 * self.epochs / 5), first + 1)
        return first, second

    def lr_at(self, epoch: int) -> float:
        return self.lr * 0.5 ** sum(epoch >= m for m in self.milestones())

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ablation"] = list(self.ablation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["weights"] = LossWeights(**d.get("weights", {}))
        d["ablation"] = tuple(d.get("ablation", ()))
        return cls(**d)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "weights":
                lines += [f"{k}={v}" for k, v in asdict(self.weights).items()]
            elif f.name == "ablation":
                lines.append(f"ablation={','.join(self.ablation)}")
            else:
                value = getattr(self, f.name)
                lines.append(f"{f.name}={'' if value is None else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        top = {f.name: f for f in fields(cls)}
        weight_names = {f.name for f in fields(LossWeights)}
        kwargs, weights = {}, {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in weight_names:
                weights[key] = float(value)
            elif key in top and key != "weights":
                kwargs[key] = _parse_value(key, value)
            else:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
        kwargs.update(overrides)
        return cls(weights=LossWeights(**weights), **kwargs)

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _parse_value(key: str, value: str):
    if key in ("epochs", "batch_size", "seed"):
        return int(value)
    if key == "max_steps":
        return int(value) if value else None
    if key in ("lr", "beta1", "beta2", "eps"):
        return float(value)
    if key in ("augment", "outer_all_scales"):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {value!r}")
    if key == "ablation":
        return tuple(a.strip() for a in value.split(",") if a.strip())
    return value
