"""Versioned little-endian binary checkpoints.

Layout::

    b"DXAN"  u8 version
    u64 config length, UTF-8 JSON config (sorted keys)
    u32 record count
    per record: u32 name length, name, u8 rank, rank x u64 dims, f64 data

Parameters are stored as float64 and the class means are the records
``heads.mu0`` and ``heads.mu1``.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .classifier import LatentHeads
from .errors import FormatError
from .flow import FlowConfig, FlowModel, make_flow
from .train import TrainConfig

MAGIC = b"DXAN"
VERSION = 1


@dataclass
class Checkpoint:
    model: FlowModel
    heads: LatentHeads
    train_config: TrainConfig | None = None


def _records(model: FlowModel, heads: LatentHeads) -> list[tuple[str, np.ndarray]]:
    recs = [(p.name, p.data) for p in model.parameters()]
    recs += [("heads.mu0", heads.mu0), ("heads.mu1", heads.mu1)]
    return recs


def dumps(model: FlowModel, heads: LatentHeads, train_config: TrainConfig | None = None) -> bytes:
    config = {
        "flow": model.config.to_dict(),
        "heads": {"c": heads.c, "learnable": heads.learnable},
        "train": train_config.to_dict() if train_config is not None else None,
    }
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = [MAGIC, struct.pack("<B", VERSION), struct.pack("<Q", len(blob)), blob]
    recs = _records(model, heads)
    out.append(struct.pack("<I", len(recs)))
    for name, arr in recs:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def save_checkpoint(path: str | os.PathLike, model: FlowModel, heads: LatentHeads,
                    train_config: TrainConfig | None = None) -> None:
    with open(path, "wb") as f:
        f.write(dumps(model, heads, train_config))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated file while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic: not a dxann checkpoint")
    (version,) = r.unpack("<B", "version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} (supported: {VERSION})")
    (clen,) = r.unpack("<Q", "config length")
    try:
        config = json.loads(r.take(clen, "config").decode("utf-8"))
        flow_cfg = FlowConfig.from_dict(config["flow"])
        heads_cfg = config["heads"]
        train_cfg = TrainConfig.from_dict(config["train"]) if config.get("train") else None
    except FormatError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed config block: {exc}") from None

    (count,) = r.unpack("<I", "record count")
    arrays: dict[str, np.ndarray] = {}
    for i in range(count):
        (nlen,) = r.unpack("<I", f"record {i} name length")
        name = r.take(nlen, f"record {i} name").decode("utf-8")
        (rank,) = r.unpack("<B", f"{name} rank")
        dims = r.unpack(f"<{rank}Q", f"{name} dims")
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(r.take(8 * size, f"{name} data"), dtype="<f8")
        arrays[name] = data.reshape(dims).astype(np.float64)
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after last record")

    model = make_flow(flow_cfg)
    for p in model.parameters():
        if p.name not in arrays:
            raise FormatError(f"missing parameter {p.name}")
        arr = arrays.pop(p.name)
        if arr.shape != p.shape:
            raise FormatError(f"parameter {p.name}: stored shape {arr.shape}, model expects {p.shape}")
        p.data[...] = arr
    for key in ("heads.mu0", "heads.mu1"):
        if key not in arrays:
            raise FormatError(f"missing parameter {key}")
        if arrays[key].shape != (flow_cfg.dim,):
            raise FormatError(f"parameter {key}: stored shape {arrays[key].shape}, "
                              f"model expects ({flow_cfg.dim},)")
    mu0, mu1 = arrays.pop("heads.mu0"), arrays.pop("heads.mu1")
    if arrays:
        raise FormatError(f"unexpected parameter {sorted(arrays)[0]}")
    heads = LatentHeads(mu0, mu1, heads_cfg["c"], heads_cfg["learnable"])
    return Checkpoint(model, heads, train_cfg)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as f:
        return loads(f.read())
