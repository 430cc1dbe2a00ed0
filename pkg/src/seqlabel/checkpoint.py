"""Versioned binary checkpoint container.

Layout::

    8 bytes   magic  b"SEQLCKPT"
    4 bytes   format version, little-endian uint32
    8 bytes   header length N, little-endian uint64
    N bytes   UTF-8 JSON header (sorted keys): every non-array field, plus an
              "arrays" table of {name, shape, offset, nbytes}, plus the
              SHA-256 of the array blob
    rest      array blob: little-endian float64, C order, in table order

Arrays are named ``params/<name>``, ``adam_m/<name>`` and ``adam_v/<name>``.
Serialization is deterministic, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"SEQLCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    config: dict
    params: dict
    vocabs: dict
    optimizer: dict = field(default_factory=lambda: {"t": 0, "m": {}, "v": {}})
    epoch: int = 0
    dev_score: float | None = None
    rng_states: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def _array_items(ckpt: Checkpoint):
    items = [(f"params/{k}", v) for k, v in ckpt.params.items()]
    items += [(f"adam_m/{k}", v) for k, v in ckpt.optimizer.get("m", {}).items()]
    items += [(f"adam_v/{k}", v) for k, v in ckpt.optimizer.get("v", {}).items()]
    return sorted(items, key=lambda kv: kv[0])


def dumps(ckpt: Checkpoint) -> bytes:
    table, chunks, offset = [], [], 0
    for name, arr in _array_items(ckpt):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        table.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    blob = b"".join(chunks)
    header = {
        "arrays": table,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "config": ckpt.config,
        "dev_score": ckpt.dev_score,
        "epoch": ckpt.epoch,
        "history": ckpt.history,
        "meta": ckpt.meta,
        "optimizer_t": ckpt.optimizer.get("t", 0),
        "rng_states": ckpt.rng_states,
        "vocabs": ckpt.vocabs,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)) + head + blob


def loads(raw: bytes) -> Checkpoint:
    if len(raw) < _PREFIX.size:
        raise CheckpointError("file too short to be a checkpoint")
    magic, version, head_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError("not a seqlabel checkpoint (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    start = _PREFIX.size
    if start + head_len > len(raw):
        raise CheckpointError("truncated header")
    try:
        header = json.loads(raw[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header: {exc}") from None
    blob = raw[start + head_len:]
    if hashlib.sha256(blob).hexdigest() != header.get("blob_sha256"):
        raise CheckpointError("array data checksum mismatch (file corrupt or truncated)")
    params, m, v = {}, {}, {}
    targets = {"params": params, "adam_m": m, "adam_v": v}
    for entry in header["arrays"]:
        kind, _, name = entry["name"].partition("/")
        end = entry["offset"] + entry["nbytes"]
        if kind not in targets or end > len(blob):
            raise CheckpointError(f"bad array table entry {entry['name']!r}")
        arr = np.frombuffer(blob[entry["offset"]:end], dtype="<f8").astype(np.float64)
        targets[kind][name] = arr.reshape(entry["shape"])
    return Checkpoint(
        config=header["config"],
        params=params,
        vocabs=header["vocabs"],
        optimizer={"t": header["optimizer_t"], "m": m, "v": v},
        epoch=header["epoch"],
        dev_score=header["dev_score"],
        rng_states=header["rng_states"],
        history=header["history"],
        meta=header["meta"],
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load_checkpoint(path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return loads(raw)
