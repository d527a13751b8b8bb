"""Versioned binary checkpoint of model weights plus configuration.

Layout: 8-byte magic, uint32 version, uint32 header length, UTF-8 JSON
header, then the raw little-endian f64 buffers of every parameter in header
order. The JSON is emitted with sorted keys and no whitespace, and arrays are
C-order, so saving the same weights twice yields byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .config import ModelConfig
from .encoder import ClickSegModel

MAGIC = b"CSEGCKPT"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def _config_dict(config: ModelConfig) -> dict:
    d = asdict(config)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def save_checkpoint(path: str, model: ClickSegModel, extra: dict | None = None) -> None:
    params = model.params()
    header = {
        "config": _config_dict(model.config),
        "params": [{"name": n, "shape": list(t.data.shape)} for n, t in params],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for _, t in params:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[ClickSegModel, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cfg_d = dict(header["config"])
        for k in ("dims", "heads", "layers", "reduction"):
            cfg_d[k] = tuple(cfg_d[k])
        config = ModelConfig(**cfg_d)
        model = ClickSegModel(config, seed=0)
        params = dict(model.params())
        listed = header["params"]
        if [p["name"] for p in listed] != [n for n, _ in model.params()]:
            raise CheckpointError("parameter inventory does not match model")
        for p in listed:
            t = params[p["name"]]
            n = int(np.prod(p["shape"])) if p["shape"] else 1
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise CheckpointError(f"truncated data for {p['name']}")
            arr = np.frombuffer(raw, dtype="<f8").reshape(p["shape"])
            if arr.shape != t.data.shape:
                raise CheckpointError(
                    f"shape mismatch for {p['name']}: "
                    f"{arr.shape} vs {t.data.shape}")
            t.data = np.ascontiguousarray(arr.astype(np.float64))
        if fh.read(1):
            raise CheckpointError("trailing bytes after parameter data")
    return model, header.get("extra", {})
