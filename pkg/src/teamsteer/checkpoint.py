"""Versioned binary container for named tensors plus a JSON metadata block.

Wire format (little-endian):
    bytes 0..4   magic ``TSCK``
    bytes 4..6   format version (u16)
    bytes 6..10  header length in bytes (u32)
    header       UTF-8 JSON: {"meta": {...}, "tensors": [{name, dtype,
                 shape, offset, nbytes}, ...]}
    payload      tensor bytes, C-order, at the stated offsets

Used for every persisted model (actors, critics, influence predictors, the
team predictor, teachers, students) and for binary datasets.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TSCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors, meta=None):
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        blob = arr.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": str(arr.dtype),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta or {}, "tensors": entries}).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_tensors(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    header = json.loads(data[10 : 10 + header_len].decode())
    payload = data[10 + header_len :]
    tensors = {}
    for ent in header["tensors"]:
        start, nbytes = ent["offset"], ent["nbytes"]
        arr = np.frombuffer(payload[start : start + nbytes], dtype=ent["dtype"])
        tensors[ent["name"]] = arr.reshape(ent["shape"]).copy()
    return tensors, header["meta"]


def save_module(path, module, meta=None):
    """Persist a torch module's state dict as named tensors."""
    tensors = {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}
    save_tensors(path, tensors, meta)


def load_module(path, module):
    """Load named tensors into an already-constructed module; returns meta."""
    import torch

    tensors, meta = load_tensors(path)
    state = {k: torch.as_tensor(v) for k, v in tensors.items()}
    module.load_state_dict(state)
    return meta
