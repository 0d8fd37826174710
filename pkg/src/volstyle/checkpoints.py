"""Tensor-archive checkpoints.

Byte layout (all integers little-endian):

    bytes 0..3    magic b"VSAR"
    bytes 4..7    uint32 format version (currently 1)
    bytes 8..15   uint64 header length H
    bytes 16..16+H  UTF-8 JSON header:
                    {"meta": {...},
                     "tensors": {name: {"offset": int, "shape": [...],
                                        "dtype": "float32"}}}
    remainder     raw little-endian float32 tensor payload; offsets are
                  relative to the payload start

Writes are atomic (temp file + rename) and round-trip bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

from .distill import UCNModel
from .fields import ModelConfig, RadianceField
from .pcn import PCNModel
from .rendering import SceneModels

MAGIC = b"VSAR"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_archive(path: Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    index = {}
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        index[name] = {"offset": offset, "shape": list(arr.shape), "dtype": "float32"}
        blobs.append(arr.tobytes())
        offset += len(blobs[-1])
    header = json.dumps({"meta": meta, "tensors": index}).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)


def load_archive(path: Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"not a checkpoint archive: {path}")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported archive version {version} "
                              f"(expected {FORMAT_VERSION})")
    header_len = struct.unpack("<Q", raw[8:16])[0]
    if len(raw) < 16 + header_len:
        raise CheckpointError("truncated archive: header incomplete")
    header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    payload = raw[16 + header_len:]
    tensors = {}
    for name, entry in header["tensors"].items():
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4 if shape else 4
        start = entry["offset"]
        if start + nbytes > len(payload):
            raise CheckpointError(f"truncated archive: tensor '{name}' incomplete")
        tensors[name] = np.frombuffer(payload[start:start + nbytes],
                                      dtype="<f4").reshape(shape).copy()
    return tensors, header["meta"]


def _module_tensors(prefix: str, module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v.detach().cpu().numpy()
            for k, v in module.state_dict().items()}


def _load_module(prefix: str, module: torch.nn.Module,
                 tensors: dict[str, np.ndarray]) -> None:
    state = {}
    for key, param in module.state_dict().items():
        name = f"{prefix}.{key}"
        if name not in tensors:
            raise CheckpointError(f"archive is missing tensor '{name}'")
        arr = tensors[name]
        if tuple(arr.shape) != tuple(param.shape):
            raise CheckpointError(
                f"tensor '{name}' has shape {tuple(arr.shape)}, expected "
                f"{tuple(param.shape)}")
        state[key] = torch.as_tensor(arr, dtype=param.dtype)
    module.load_state_dict(state)


def save_checkpoint(models: SceneModels, path: Path, *, extra_meta: dict | None = None) -> None:
    """Persist every trained network plus stage/palette/config metadata."""
    tensors: dict[str, np.ndarray] = {}
    meta: dict = {
        "stage": models.stage,
        "model_config": models.config.to_dict(),
        "stylized": sorted(models.stylized),
        "palette": None,
    }
    if models.base is not None:
        tensors.update(_module_tensors("base", models.base))
    if models.pcn is not None:
        tensors.update(_module_tensors("pcn", models.pcn))
        meta["palette"] = models.pcn.palette.detach().cpu().numpy().tolist()
    if models.ucn is not None:
        tensors.update(_module_tensors("ucn", models.ucn))
    if models.pre_style_ucn is not None:
        tensors.update({f"pre_style_ucn.{k}": v.detach().cpu().numpy()
                        for k, v in models.pre_style_ucn.items()})
        meta["has_pre_style_ucn"] = True
    if extra_meta:
        meta.update(extra_meta)
    save_archive(path, tensors, meta)


def load_checkpoint(path: Path) -> SceneModels:
    tensors, meta = load_archive(path)
    config = ModelConfig.from_dict(meta["model_config"])
    stage = meta.get("stage", "base")
    if stage not in ("base", "pcn", "distilled", "stylized"):
        raise CheckpointError(f"archive has unknown stage '{stage}'")
    models = SceneModels(config=config, stage=stage,
                         stylized=set(meta.get("stylized", [])))
    models.base = RadianceField(config)
    _load_module("base", models.base, tensors)
    if stage in ("pcn", "distilled", "stylized"):
        palette = meta.get("palette")
        if palette is None:
            raise CheckpointError("archive stage needs palette colors in metadata")
        models.pcn = PCNModel(config, np.asarray(palette))
        _load_module("pcn", models.pcn, tensors)
    if stage in ("distilled", "stylized"):
        models.ucn = UCNModel(config)
        _load_module("ucn", models.ucn, tensors)
    if meta.get("has_pre_style_ucn"):
        probe = UCNModel(config)
        _load_module("pre_style_ucn", probe, tensors)
        models.pre_style_ucn = probe.state_dict()
    return models
