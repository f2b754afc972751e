"""Named-tensor archive.

Layout::

    b"NTAR1\\n"                      magic
    uint64 little-endian             byte length of the JSON manifest
    manifest                         UTF-8 JSON list of {"name", "shape"}
    payloads                         float64 little-endian, row-major, manifest order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np
import torch

MAGIC = b"NTAR1\n"


class ArchiveError(ValueError):
    pass


def save_tensors(tensors: Mapping[str, torch.Tensor], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {name: np.asarray(t.detach().cpu().numpy(), dtype="<f8", order="C") for name, t in tensors.items()}
    manifest = json.dumps([{"name": n, "shape": list(a.shape)} for n, a in arrays.items()]).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for a in arrays.values():
            fh.write(a.tobytes(order="C"))


def load_tensors(path: str | Path) -> Dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ArchiveError(f"{path}: not a named-tensor archive")
    offset = len(MAGIC)
    (length,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    manifest = json.loads(data[offset : offset + length].decode("utf-8"))
    offset += length
    out: Dict[str, np.ndarray] = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise ArchiveError(f"{path}: truncated payload for {entry['name']}")
        out[entry["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise ArchiveError(f"{path}: trailing bytes after payloads")
    return out


def save_model(model: torch.nn.Module, path: str | Path) -> None:
    save_tensors(dict(model.state_dict()), path)


def load_model(model: torch.nn.Module, path: str | Path) -> None:
    arrays = load_tensors(path)
    state = model.state_dict()
    missing = set(state) - set(arrays)
    if missing:
        raise ArchiveError(f"archive lacks tensors: {sorted(missing)}")
    model.load_state_dict({k: torch.as_tensor(arrays[k], dtype=v.dtype) for k, v in state.items()})
