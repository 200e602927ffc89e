"""Binary checkpoint serialization.

Format (version 1), all integers little-endian u32:

    magic b"DGAN"
    version
    meta_len, then meta_len bytes of UTF-8 JSON {"config": {...}, "step": n}
    tensor records until EOF:
        name_len | name (UTF-8) | rank | dims[rank] | float32 data

Tensors are written in a fixed order (the four parameter stores, then
optimizer accumulators under an "opt." prefix), metadata JSON uses sorted
keys, and writes go through a temp file renamed into place; saving the
same model twice therefore produces byte-identical files and a reader
never observes a half-written checkpoint.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import (
    CheckpointError,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ShapeError,
)
from .model import TrainConfig, TwinGanModel

MAGIC = b"DGAN"
VERSION = 1
_U32 = struct.Struct("<I")
# guards against nonsense lengths in corrupt files
_MAX_NAME = 1 << 16
_MAX_RANK = 8
_MAX_ELEMS = 1 << 31


@dataclass
class Checkpoint:
    """A parsed checkpoint: format version, config snapshot, step, tensors."""

    version: int
    config: dict
    step: int
    tensors: dict[str, np.ndarray]


def _write_u32(f: BinaryIO, v: int) -> None:
    f.write(_U32.pack(v))


def _write_record(f: BinaryIO, name: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    _write_u32(f, len(nb))
    f.write(nb)
    _write_u32(f, arr.ndim)
    for d in arr.shape:
        _write_u32(f, d)
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(
    path: str | Path,
    model: TwinGanModel,
    step: int,
    config: dict | None = None,
    include_optimizer: bool = True,
) -> None:
    """Serialize model parameters (and optimizer state) atomically.

    config defaults to the model's own TrainConfig; callers may pass a
    richer dict (e.g. a full run config) as long as it stays JSON-safe.
    """
    path = Path(path)
    if config is None:
        config = model.cfg.to_dict()
    meta = json.dumps(
        {"config": config, "step": int(step)}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        _write_u32(f, VERSION)
        _write_u32(f, len(meta))
        f.write(meta)
        for prefix, store in model.stores().items():
            for name, t in store.items():
                _write_record(f, f"{prefix}.{name}", t.data)
        if include_optimizer:
            for prefix, opt in model.optimizers().items():
                for name, arr in opt.acc.items():
                    _write_record(f, f"opt.{prefix}.{name}", arr)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def _read_exact(f: BinaryIO, n: int, tensor_name: str) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise CheckpointTruncatedError(tensor_name, f"wanted {n} bytes, got {len(b)}")
    return b


def _read_u32(f: BinaryIO, tensor_name: str) -> int:
    return _U32.unpack(_read_exact(f, 4, tensor_name))[0]


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Parse a checkpoint file; raises typed errors on corruption.

    Wrong leading bytes raise CheckpointMagicError, an unsupported version
    CheckpointVersionError, and a file that ends mid-record
    CheckpointTruncatedError carrying the name of the tensor that was
    being read.
    """
    path = Path(path)
    try:
        f = open(path, "rb")
    except OSError as e:
        raise CheckpointError(f"cannot open checkpoint {path}: {e}") from e
    with f:
        head = f.read(len(MAGIC))
        if head != MAGIC:
            raise CheckpointMagicError(
                f"bad magic {head!r}, expected {MAGIC!r} ({path})"
            )
        version = _read_u32(f, "<header>")
        if version != VERSION:
            raise CheckpointVersionError(f"unsupported version {version}, expected {VERSION}")
        meta_len = _read_u32(f, "<header>")
        if meta_len > _MAX_NAME * 16:
            raise CheckpointError(f"implausible metadata length {meta_len}")
        try:
            meta = json.loads(_read_exact(f, meta_len, "<metadata>").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"corrupt checkpoint metadata: {e}") from e
        if not isinstance(meta, dict) or "config" not in meta or "step" not in meta:
            raise CheckpointError("checkpoint metadata must carry config and step")

        tensors: dict[str, np.ndarray] = {}
        index = 0
        while True:
            first = f.read(4)
            if first == b"":
                break
            placeholder = f"<record {index}>"
            if len(first) != 4:
                raise CheckpointTruncatedError(placeholder, "cut off in name length")
            (name_len,) = _U32.unpack(first)
            if not (0 < name_len <= _MAX_NAME):
                raise CheckpointError(f"implausible tensor name length {name_len}")
            try:
                name = _read_exact(f, name_len, placeholder).decode("utf-8")
            except UnicodeDecodeError as e:
                raise CheckpointError(f"tensor name is not UTF-8: {e}") from e
            rank = _read_u32(f, name)
            if rank > _MAX_RANK:
                raise CheckpointError(f"implausible rank {rank} for tensor '{name}'")
            dims = tuple(_read_u32(f, name) for _ in range(rank))
            n_elems = 1
            for d in dims:
                n_elems *= d
            if n_elems > _MAX_ELEMS:
                raise CheckpointError(f"implausible element count for tensor '{name}'")
            raw = _read_exact(f, 4 * n_elems, name)
            arr = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
            if name in tensors:
                raise CheckpointError(f"duplicate tensor '{name}'")
            tensors[name] = arr
            index += 1
    return Checkpoint(version=version, config=meta["config"], step=int(meta["step"]), tensors=tensors)


def restore_model(source: str | Path | Checkpoint) -> tuple[TwinGanModel, int]:
    """Rebuild a model from a checkpoint.

    The stored config snapshot may contain run-level fields beyond the
    training config; extras are ignored here. Optimizer accumulators are
    restored when present. Random streams restart from the config seed:
    a resumed run is a valid continuation, not a bit-replay of the
    uninterrupted original.
    """
    ckpt = source if isinstance(source, Checkpoint) else load_checkpoint(source)
    try:
        cfg = TrainConfig.from_dict(ckpt.config, ignore_extra=True)
    except (TypeError, KeyError) as e:
        raise CheckpointError(f"checkpoint config is unusable: {e}") from e
    model = TwinGanModel(cfg)
    for prefix, store in model.stores().items():
        arrays = {}
        for name in store.names():
            full = f"{prefix}.{name}"
            if full not in ckpt.tensors:
                raise CheckpointError(f"checkpoint is missing tensor '{full}'")
            arrays[name] = ckpt.tensors[full]
        try:
            store.load_arrays(arrays)
        except ShapeError as e:
            raise CheckpointError(str(e)) from e
    has_opt = any(k.startswith("opt.") for k in ckpt.tensors)
    if has_opt:
        for prefix, opt in model.optimizers().items():
            arrays = {}
            for name in opt.acc:
                full = f"opt.{prefix}.{name}"
                if full not in ckpt.tensors:
                    raise CheckpointError(f"checkpoint is missing tensor '{full}'")
                arrays[name] = ckpt.tensors[full]
            opt.load_arrays(arrays)
    return model, ckpt.step
