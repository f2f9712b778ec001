"""TNSR1 tensor file format and checkpoint manifests.

Layout of a ``.tnsr`` file:

    5 bytes   magic ``TNSR1``
    1 byte    dtype code: 0 = float32, 1 = float64
    1 byte    rank
    rank*8    extents, little-endian uint64
    payload   raw little-endian elements, row-major

A checkpoint is a directory with ``manifest.json`` (parameter names, shapes,
dtypes, relative file paths, plus an open ``meta`` object) and one ``.tnsr``
file per tensor.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"TNSR1"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def write_tnsr(path: str | Path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.dtype not in _DTYPE_CODES:
        raise DataError(f"TNSR1 stores float32/float64 only, got {arr.dtype}")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def read_tnsr(path: str | Path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        header = fh.read(2)
        if len(header) != 2:
            raise DataError(f"{path}: truncated header")
        code, rank = struct.unpack("<BB", header)
        if code not in _CODE_DTYPES:
            raise DataError(f"{path}: unknown dtype code {code}")
        ext_raw = fh.read(8 * rank)
        if len(ext_raw) != 8 * rank:
            raise DataError(f"{path}: truncated extents")
        shape = struct.unpack(f"<{rank}Q", ext_raw)
        dtype = _CODE_DTYPES[code]
        count = int(np.prod(shape)) if rank else 1
        payload = fh.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise DataError(f"{path}: truncated payload")
        arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="), copy=True)


def save_manifest(
    dirpath: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None
) -> None:
    """Write a checkpoint directory: manifest.json + one TNSR1 file per tensor."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        fname = name.replace("/", "_") + ".tnsr"
        write_tnsr(dirpath / fname, arr)
        entries[name] = {
            "file": fname,
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
        }
    manifest = {"format": "TNSR1-manifest", "tensors": entries, "meta": meta or {}}
    with open(dirpath / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_manifest(dirpath: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    dirpath = Path(dirpath)
    mpath = dirpath / "manifest.json"
    if not mpath.exists():
        raise DataError(f"no manifest.json under {dirpath}")
    with open(mpath) as fh:
        manifest = json.load(fh)
    tensors = {}
    for name, entry in manifest.get("tensors", {}).items():
        arr = read_tnsr(dirpath / entry["file"])
        if list(arr.shape) != list(entry["shape"]):
            raise DataError(f"{name}: manifest shape {entry['shape']} != file shape {arr.shape}")
        tensors[name] = arr
    return tensors, manifest.get("meta", {})
