"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic      8 bytes   b"S2DRNNCK"
    version    uint32
    header_len uint32
    header     UTF-8 JSON: config, vocabulary, [name, dtype, shape] per tensor
    payload    raw little-endian tensor data in header order
    checksum   32 bytes  SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .config import ConfigError, TrainConfig
from .model import TranslationModel
from .vocab import Vocabulary

MAGIC = b"S2DRNNCK"
VERSION = 1


class CheckpointError(Exception):
    pass


class IntegrityError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


def to_bytes(model: TranslationModel) -> bytes:
    tensors = []
    payload = bytearray()
    for name, t in model.named_parameters():
        arr = np.ascontiguousarray(t.data, dtype=t.data.dtype.newbyteorder("<"))
        tensors.append([name, arr.dtype.str, list(arr.shape)])
        payload += arr.tobytes()
    header = json.dumps(
        {"config": model.config.to_dict(), "vocab": model.vocab.to_dict(), "tensors": tensors},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    body = MAGIC + struct.pack("<II", VERSION, len(header)) + header + bytes(payload)
    return body + hashlib.sha256(body).digest()


def from_bytes(blob: bytes) -> TranslationModel:
    if len(blob) < len(MAGIC) + 8 + 32:
        raise IntegrityError("checkpoint is truncated")
    body, digest = blob[:-32], blob[-32:]
    if body[: len(MAGIC)] != MAGIC:
        raise IntegrityError("not a checkpoint file (bad magic)")
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError("checksum mismatch; file is corrupt or truncated")
    version, header_len = struct.unpack("<II", body[len(MAGIC) : len(MAGIC) + 8])
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version} (expected {VERSION})")
    start = len(MAGIC) + 8
    header = json.loads(body[start : start + header_len].decode("utf-8"))
    try:
        config = TrainConfig.from_dict(header["config"])
    except (ConfigError, TypeError) as exc:
        raise CheckpointError(f"bad config in checkpoint: {exc}") from None
    model = TranslationModel(config, Vocabulary.from_dict(header["vocab"]))
    params = dict(model.named_parameters())
    offset = start + header_len
    names = [entry[0] for entry in header["tensors"]]
    if names != list(params):
        raise CheckpointError("checkpoint tensors do not match the model described by its config")
    for name, dtype, shape in header["tensors"]:
        dt = np.dtype(dtype)
        n = int(np.prod(shape)) * dt.itemsize
        arr = np.frombuffer(body, dtype=dt, count=int(np.prod(shape)), offset=offset).reshape(shape)
        target = params[name]
        if target.data.shape != arr.shape:
            raise CheckpointError(f"{name}: shape {arr.shape} vs model {target.data.shape}")
        target.data[...] = arr.astype(target.data.dtype)
        offset += n
    if offset != len(body):
        raise IntegrityError("trailing bytes after tensor payload")
    return model


def save(model: TranslationModel, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(model))


def load(path: str | Path) -> TranslationModel:
    return from_bytes(Path(path).read_bytes())
