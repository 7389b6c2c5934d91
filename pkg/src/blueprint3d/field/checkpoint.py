"""Versioned binary checkpoint for field weights.

Layout: magic "PAFW", u32 version, u32 config length, UTF-8 JSON config
(encoder fields and MLP widths), then every parameter tensor as raw
little-endian float32 in declaration order. The declaration order is fixed
by the config, so no per-tensor headers are needed.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigMismatch, FormatError
from .encoder import EncoderConfig
from .layers import ParamSet
from .model import FieldConfig, init_weights

MAGIC = b"PAFW"
VERSION = 1


def _config_payload(cfg: FieldConfig) -> bytes:
    doc = {
        "encoder": {
            "stacks": cfg.encoder.stacks,
            "initial_downsample_steps": cfg.encoder.initial_downsample_steps,
            "internal_downsample_steps": cfg.encoder.internal_downsample_steps,
            "feature_depth": cfg.encoder.feature_depth,
            "max_input_dim": cfg.encoder.max_input_dim,
        },
        "mlp_hidden": list(cfg.mlp_hidden),
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def _config_from_payload(blob: bytes) -> FieldConfig:
    try:
        doc = json.loads(blob.decode("utf-8"))
        enc = EncoderConfig(**doc["encoder"])
        return FieldConfig(encoder=enc, mlp_hidden=tuple(doc["mlp_hidden"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint config block is invalid: {exc}") from exc


def save_weights(path: str | Path, cfg: FieldConfig, params: ParamSet) -> None:
    blob = _config_payload(cfg)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob]
    for _, t in params.items():
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_weights(path: str | Path, expect: FieldConfig | None = None) -> tuple[FieldConfig, ParamSet]:
    """Rebuilds the parameter set from the stored config and tensor bytes.
    `expect` asserts the checkpoint matches a caller-side configuration."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError("checkpoint shorter than its header")
    if raw[:4] != MAGIC:
        raise FormatError(f"bad checkpoint magic {raw[:4]!r}")
    version, json_len = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if len(raw) < 12 + json_len:
        raise FormatError("checkpoint config block truncated")
    cfg = _config_from_payload(raw[12 : 12 + json_len])
    if expect is not None and cfg != expect:
        raise ConfigMismatch(f"checkpoint config {cfg} does not match expected {expect}")
    params = init_weights(cfg, seed=0)
    offset = 12 + json_len
    for name, t in params.items():
        n = t.data.size
        end = offset + 4 * n
        if end > len(raw):
            raise FormatError(f"checkpoint truncated inside tensor {name!r}")
        t.data = np.frombuffer(raw[offset:end], dtype="<f4").reshape(t.data.shape).copy()
        offset = end
    if offset != len(raw):
        raise FormatError(f"{len(raw) - offset} trailing bytes after the last tensor")
    return cfg, params


def peek_weights_config(path: str | Path) -> FieldConfig:
    """Reads just the header and config block, skipping the tensor bytes."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12:
            raise FormatError("checkpoint shorter than its header")
        if head[:4] != MAGIC:
            raise FormatError(f"bad checkpoint magic {head[:4]!r}")
        version, json_len = struct.unpack_from("<II", head, 4)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        blob = fh.read(json_len)
    if len(blob) < json_len:
        raise FormatError("checkpoint config block truncated")
    return _config_from_payload(blob)
