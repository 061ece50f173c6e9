"""Binary checkpoint format.

Layout: ``b"GCOCO1\\0"``, a little-endian u64 header length, a UTF-8 JSON
header ``{version, config, entries}``, then raw little-endian float32 data.
Each entry records ``name, dtype, shape, offset, length`` (offset and
length in bytes, relative to the start of the data section).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import tensor as T
from .gist import GistPools
from .model import ModelConfig, ModelParams

MAGIC = b"GCOCO1\0"
VERSION = 1
_POOL_NAMES = ("gist.instruction", "gist.passage", "gist.unified")


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class MissingTensorsError(CheckpointError):
    pass


def save_checkpoint(params: ModelParams, pools: GistPools | None, path, extra: dict | None = None) -> None:
    named = list(params.named_tensors())
    if pools is not None:
        named += list(pools.named_tensors())
    entries, blobs, offset = [], [], 0
    for name, t in named:
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        entries.append({"name": name, "dtype": "f32", "shape": list(t.shape), "offset": offset, "length": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "version": VERSION,
        "config": {
            "model": params.config.to_dict(),
            "role": params.role,
            "frozen": params.frozen,
            **(extra or {}),
        },
        "entries": entries,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def read_header(path) -> dict:
    return _read(path)[0]


def _read(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise BadMagicError("bad magic")
    pos = len(MAGIC)
    if len(raw) < pos + 8:
        raise TruncatedCheckpointError("truncated header length")
    (n,) = struct.unpack("<Q", raw[pos : pos + 8])
    pos += 8
    if len(raw) < pos + n:
        raise TruncatedCheckpointError("truncated header")
    try:
        header = json.loads(raw[pos : pos + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from None
    if header.get("version") != VERSION:
        raise VersionMismatchError(f"checkpoint version {header.get('version')} != supported {VERSION}")
    return header, raw[pos + n :]


def load_checkpoint(path, expected_names=None) -> tuple[ModelParams, GistPools | None]:
    """Read params (and gist pools if present).

    With ``expected_names`` only those model tensors are loaded; any absent
    from the file raise ``MissingTensorsError`` naming them.
    """
    header, data = _read(path)
    arrays = {}
    for e in header["entries"]:
        if e["dtype"] != "f32":
            raise CheckpointError(f"unsupported dtype {e['dtype']} for {e['name']}")
        end = e["offset"] + e["length"]
        if end > len(data):
            raise TruncatedCheckpointError(f"data for {e['name']} is truncated")
        arr = np.frombuffer(data[e["offset"] : end], dtype="<f4").astype(np.float32).reshape(e["shape"])
        arrays[e["name"]] = arr

    cfg = header["config"]
    model_names = [n for n in arrays if n not in _POOL_NAMES]
    if expected_names is not None:
        missing = [n for n in expected_names if n not in arrays]
        if missing:
            raise MissingTensorsError(f"missing tensors: {', '.join(missing)}")
        model_names = list(expected_names)
    frozen = bool(cfg.get("frozen", False))
    tensors = {n: T.parameter(arrays[n], requires_grad=not frozen) for n in model_names}
    params = ModelParams(ModelConfig(**cfg["model"]), tensors, role=cfg.get("role", "teacher"), frozen=frozen)

    pools = None
    if "gist.unified" in arrays:
        pools = GistPools(T.parameter(arrays["gist.unified"]), None)
    elif "gist.instruction" in arrays:
        pools = GistPools(T.parameter(arrays["gist.instruction"]), T.parameter(arrays["gist.passage"]))
    return params, pools
