"""Video persistence: raw float32 planar clips with JSON sidecars, PNG dumps.

The raw format stores a (3, T, H, W) float32 array as little-endian bytes in
``<name>.rgb32`` with the shape recorded in ``<name>.json``. It is exact (no
quantization), memory-mappable for streaming frame-range reads, and easy to
hash for determinism checks. PNG sequences are a lossy (8-bit) convenience
for viewing results.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import DataError

RAW_SUFFIX = ".rgb32"
SIDECAR_SUFFIX = ".json"


def _paths(path: str) -> tuple[str, str]:
    base = path[: -len(RAW_SUFFIX)] if path.endswith(RAW_SUFFIX) else path
    return base + RAW_SUFFIX, base + SIDECAR_SUFFIX


def write_raw_video(path: str, video: np.ndarray) -> str:
    """Write (3, T, H, W) float32 data; returns the raw file path."""
    arr = np.asarray(video)
    if arr.ndim != 4 or arr.shape[0] != 3:
        raise DataError(f"expected video (3,T,H,W), got {arr.shape}")
    raw_path, side_path = _paths(path)
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(raw_path, "wb") as fh:
        fh.write(arr.tobytes())
    sidecar = {"shape": list(arr.shape), "dtype": "float32", "layout": "CTHW"}
    with open(side_path, "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)
        fh.write("\n")
    return raw_path


def _load_sidecar(path: str) -> tuple[str, tuple[int, ...]]:
    raw_path, side_path = _paths(path)
    if not os.path.exists(side_path):
        raise DataError(f"missing sidecar for raw video: {side_path}")
    if not os.path.exists(raw_path):
        raise DataError(f"missing raw video file: {raw_path}")
    with open(side_path) as fh:
        meta = json.load(fh)
    shape = tuple(int(v) for v in meta.get("shape", ()))
    if len(shape) != 4 or shape[0] != 3 or meta.get("dtype") != "float32":
        raise DataError(f"unsupported raw video sidecar: {meta}")
    expected = int(np.prod(shape)) * 4
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise DataError(f"raw video size {actual} != expected {expected} for shape {shape}")
    return raw_path, shape


def read_raw_video(path: str) -> np.ndarray:
    raw_path, shape = _load_sidecar(path)
    with open(raw_path, "rb") as fh:
        data = np.frombuffer(fh.read(), dtype="<f4")
    return data.reshape(shape).astype(np.float32)


class RawVideoReader:
    """Frame-range access without loading the whole clip (memory-mapped)."""

    def __init__(self, path: str):
        self.path, self.shape = _load_sidecar(path)
        self.frames = self.shape[1]
        self._mm = np.memmap(self.path, dtype="<f4", mode="r", shape=self.shape)

    def read_frames(self, start: int, stop: int) -> np.ndarray:
        if not (0 <= start < stop <= self.frames):
            raise DataError(f"frame range [{start},{stop}) outside clip of {self.frames}")
        return np.array(self._mm[:, start:stop], dtype=np.float32)

    def close(self) -> None:
        self._mm = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def write_png_sequence(directory: str, video: np.ndarray, prefix: str = "frame") -> list[str]:
    """8-bit PNG dump of a (3, T, H, W) unit-range clip, one file per frame."""
    from PIL import Image

    arr = np.asarray(video)
    if arr.ndim != 4 or arr.shape[0] != 3:
        raise DataError(f"expected video (3,T,H,W), got {arr.shape}")
    os.makedirs(directory, exist_ok=True)
    paths = []
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    for t in range(arr.shape[1]):
        img = Image.fromarray(np.transpose(u8[:, t], (1, 2, 0)), mode="RGB")
        p = os.path.join(directory, f"{prefix}_{t:05d}.png")
        img.save(p)
        paths.append(p)
    return paths


def read_png_sequence(directory: str, prefix: str = "frame") -> np.ndarray:
    from PIL import Image

    names = sorted(
        n for n in os.listdir(directory) if n.startswith(prefix + "_") and n.endswith(".png")
    )
    if not names:
        raise DataError(f"no PNG frames with prefix {prefix!r} in {directory}")
    frames = []
    for n in names:
        img = Image.open(os.path.join(directory, n)).convert("RGB")
        frames.append(np.transpose(np.asarray(img, dtype=np.float32) / 255.0, (2, 0, 1)))
    return np.stack(frames, axis=1)
