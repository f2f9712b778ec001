"""Pixel- and latent-space clip containers plus resampling helpers.

Conventions: pixel clips are float32 arrays shaped (3, T, H, W) with values
in [0, 1]; latent clips are (C, F, h, w). Encodable pixel clips have
T = 4n + 1 frames and H, W divisible by 8. A latent crop window at (i, j)
always corresponds to the pixel window at (8i, 8j) — the alignment that
patch supervision relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeMismatchError

SPATIAL_FACTOR = 8
TEMPORAL_GROUP = 4


@dataclass
class VideoClip:
    """An RGB frame sequence, shape (3, T, H, W), values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 4 or arr.shape[0] != 3:
            raise ShapeMismatchError(f"VideoClip expects (3, T, H, W), got {arr.shape}")
        self.data = arr

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    def assert_encodable(self) -> "VideoClip":
        t, h, w = self.frames, self.height, self.width
        if t < 1 or (t - 1) % TEMPORAL_GROUP != 0:
            raise DataError(f"encodable clips need T = 4n+1 frames, got T={t}")
        if h % SPATIAL_FACTOR or w % SPATIAL_FACTOR:
            raise DataError(f"H and W must be multiples of 8, got {h}x{w}")
        return self

    def assert_unit_range(self, tol: float = 1e-4) -> "VideoClip":
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < -tol or hi > 1 + tol:
            raise DataError(f"pixel values outside [0,1]: range [{lo:.4f}, {hi:.4f}]")
        return self


@dataclass
class LatentClip:
    """A compressed clip, shape (C, F, h, w)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 4:
            raise ShapeMismatchError(f"LatentClip expects (C, F, h, w), got {arr.shape}")
        self.data = arr

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]


@dataclass(frozen=True)
class CropWindow:
    """Latent-space window at (i, j) with extents (h_c, w_c) and a halo margin."""

    i: int
    j: int
    h_c: int
    w_c: int
    halo: int

    def pixel_window(self) -> tuple[int, int, int, int]:
        f = SPATIAL_FACTOR
        return (f * self.i, f * self.j, f * self.h_c, f * self.w_c)

    def shifted(self, di: int, dj: int) -> "CropWindow":
        return CropWindow(self.i + di, self.j + dj, self.h_c, self.w_c, self.halo)


def crop_pix(video: VideoClip | np.ndarray, window: CropWindow) -> np.ndarray:
    """Pure pixel-space slice of the window (no resampling)."""
    arr = video.data if isinstance(video, VideoClip) else np.asarray(video)
    y, x, hh, ww = window.pixel_window()
    if y < 0 or x < 0 or y + hh > arr.shape[-2] or x + ww > arr.shape[-1]:
        raise DataError(
            f"crop window {(y, x, hh, ww)} out of range for frame {arr.shape[-2]}x{arr.shape[-1]}"
        )
    return arr[..., y : y + hh, x : x + ww]


def bilinear_upscale(frames: np.ndarray, factor: int = 4) -> np.ndarray:
    """Bilinear upscale of the last two axes (align_corners=False convention)."""
    h, w = frames.shape[-2], frames.shape[-1]
    oh, ow = h * factor, w * factor

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) / factor - 0.5
        i0 = np.floor(src).astype(int)
        frac = src - i0
        i0c = np.clip(i0, 0, n_in - 1)
        i1c = np.clip(i0 + 1, 0, n_in - 1)
        return i0c, i1c, frac.astype(frames.dtype)

    y0, y1, fy = axis_weights(h, oh)
    x0, x1, fx = axis_weights(w, ow)
    rows0 = frames[..., y0, :]
    rows1 = frames[..., y1, :]
    rows = rows0 + (rows1 - rows0) * fy[..., :, None]
    cols0 = rows[..., :, x0]
    cols1 = rows[..., :, x1]
    return cols0 + (cols1 - cols0) * fx


def area_downsample(frames: np.ndarray, factor: int = 4) -> np.ndarray:
    """Exact box-filter downsample of the last two axes."""
    h, w = frames.shape[-2], frames.shape[-1]
    if h % factor or w % factor:
        raise DataError(f"area_downsample: {h}x{w} not divisible by {factor}")
    shape = frames.shape[:-2] + (h // factor, factor, w // factor, factor)
    return frames.reshape(shape).mean(axis=(-3, -1))
