"""Checkpoint file format.

Layout:  magic ``KTCK`` (4 bytes) | format version u16 | descriptor length u32
| UTF-8 architecture descriptor | parameter count u64 | payload of raw
little-endian 32-bit floats in parameter order. Header integers big-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .models import Model, build_from_descriptor
from .rng import RngState

MAGIC = b"KTCK"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointArchError(CheckpointError):
    pass


def payload_bytes(model: Model) -> int:
    return 4 * model.param_count()


def save_checkpoint(model: Model, path) -> None:
    desc = model.descriptor_json().encode("utf-8")
    count = model.param_count()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack(">H", FORMAT_VERSION))
        f.write(struct.pack(">I", len(desc)))
        f.write(desc)
        f.write(struct.pack(">Q", count))
        for p in model.parameters():
            f.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path, rng: RngState | None = None) -> Model:
    """Rebuilds the model named by the descriptor and loads its parameters.

    `rng` only seeds structural state (dropout stream) of the rebuilt model;
    parameter values come from the file.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise CheckpointTruncatedError(f"{path}: file shorter than magic")
    if raw[:4] != MAGIC:
        raise CheckpointMagicError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 10:
        raise CheckpointTruncatedError(f"{path}: truncated header")
    (version,) = struct.unpack(">H", raw[4:6])
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (desc_len,) = struct.unpack(">I", raw[6:10])
    if len(raw) < 10 + desc_len + 8:
        raise CheckpointTruncatedError(f"{path}: truncated descriptor")
    try:
        arch = json.loads(raw[10:10 + desc_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointArchError(f"{path}: unreadable architecture descriptor: {e}") from None
    (count,) = struct.unpack(">Q", raw[10 + desc_len:18 + desc_len])

    try:
        model = build_from_descriptor(arch, rng or RngState(0))
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointArchError(f"{path}: descriptor does not name a buildable model: {e}") from None
    if model.param_count() != count:
        raise CheckpointArchError(
            f"{path}: descriptor implies {model.param_count()} parameters, header says {count}")

    payload = raw[18 + desc_len:]
    if len(payload) < 4 * count:
        raise CheckpointTruncatedError(
            f"{path}: payload holds {len(payload)} bytes, need {4 * count}")
    values = np.frombuffer(payload[:4 * count], dtype="<f4")
    offset = 0
    for p in model.parameters():
        p[...] = values[offset:offset + p.size].reshape(p.shape).astype(p.dtype)
        offset += p.size
    return model
