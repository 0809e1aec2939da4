"""Binary checkpoint: parameters, training config and Adam state.

Layout: ``b"VOCK"``, little-endian uint32 format version, uint32 header
length, a UTF-8 JSON header describing every stored array, then the raw
little-endian array payloads in header order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .optim import AdamState

MAGIC = b"VOCK"
VERSION = 1
_PREFIX = struct.Struct("<4sII")
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}
_TORCH = {v: k for k, v in _DTYPES.items()}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: dict
    config: TrainConfig
    optimizer: AdamState
    step: int

    def apply(self, model) -> None:
        """Copy the stored parameters into ``model`` (names and shapes must match)."""
        own = dict(model.named_parameters())
        if set(own) != set(self.params):
            missing = sorted(set(own) - set(self.params))
            extra = sorted(set(self.params) - set(own))
            raise CheckpointError(f"checkpoint/model mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        with torch.no_grad():
            for name, p in own.items():
                src = self.params[name]
                if src.shape != p.shape:
                    raise CheckpointError(f"{name}: shape {tuple(src.shape)} != {tuple(p.shape)}")
                p.copy_(src)

    def build_model(self):
        from .model import VODepthNet

        model = VODepthNet.from_config(self.config)
        self.apply(model)
        return model


def _arrays(model, opt: AdamState):
    for name, p in model.named_parameters():
        yield name, p.detach()
    for name in sorted(opt.m):
        yield f"adam.m.{name}", opt.m[name]
        yield f"adam.v.{name}", opt.v[name]


def save_checkpoint(path, model, config: TrainConfig, opt: AdamState, step: int) -> None:
    entries, blobs, offset = [], [], 0
    for name, t in _arrays(model, opt):
        data = t.detach().cpu().numpy().astype(_DTYPES[t.dtype], copy=False).tobytes()
        entries.append({"name": name, "dtype": _DTYPES[t.dtype], "shape": list(t.shape),
                        "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = {
        "config": config.to_dict(),
        "step": step,
        "adam": {"beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps, "t": opt.t},
        "arrays": entries,
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, len(raw)))
        f.write(raw)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    base = _PREFIX.size + hlen
    params, m, v = {}, {}, {}
    for e in header["arrays"]:
        start = base + e["offset"]
        if start + e["nbytes"] > len(raw):
            raise CheckpointError(f"{path}: truncated payload for {e['name']}")
        arr = np.frombuffer(raw, dtype=e["dtype"], count=int(np.prod(e["shape"], dtype=np.int64)), offset=start)
        t = torch.from_numpy(arr.reshape(e["shape"]).copy()).to(_TORCH[e["dtype"]])
        name = e["name"]
        if name.startswith("adam.m."):
            m[name[7:]] = t
        elif name.startswith("adam.v."):
            v[name[7:]] = t
        else:
            params[name] = t
    a = header["adam"]
    opt = AdamState(a["beta1"], a["beta2"], a["eps"], a["t"], m, v)
    return Checkpoint(params, TrainConfig.from_dict(header["config"]), opt, header["step"])
