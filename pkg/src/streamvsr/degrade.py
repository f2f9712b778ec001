"""Synthetic training data: structured HR clips and an LQ degradation chain.

HR clips are procedural (drifting sinusoid mixtures, scrolling periodic
textures, moving shapes) so they carry genuine motion with known structure —
a scrolling texture translates exactly, which downstream warp metrics can
verify against ground truth.

Degradation follows a fixed order: Gaussian blur, exact x4 area downsample,
additive Gaussian noise, and an 8x8 block-DCT quantization standing in for
codec compression. Severity parameters are drawn once per clip, and a
severity of zero for a stage skips it exactly, so the all-zero configuration
degenerates to the pure area downsample.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .clips import VideoClip, area_downsample
from .errors import ConfigError, DataError
from .rng import make_rng
from .video_io import write_raw_video

DOWNSCALE = 4
HR_KINDS = ("moving-patterns", "texture-scroll", "shapes")


@dataclass
class DegradationConfig:
    blur_sigma: tuple[float, float] = (0.4, 1.2)
    noise_sigma: tuple[float, float] = (0.01, 0.05)
    compress_quality: tuple[float, float] = (0.5, 0.95)  # 1.0 disables exactly

    def validate(self) -> "DegradationConfig":
        for name in ("blur_sigma", "noise_sigma", "compress_quality"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise ConfigError(f"{name} range must satisfy 0 <= lo <= hi, got {(lo, hi)}")
        if self.compress_quality[1] > 1.0:
            raise ConfigError("compress_quality must be <= 1.0")
        return self

    @classmethod
    def severity_zero(cls) -> "DegradationConfig":
        return cls(blur_sigma=(0.0, 0.0), noise_sigma=(0.0, 0.0), compress_quality=(1.0, 1.0))


@dataclass
class DegradationParams:
    blur_sigma: float
    noise_sigma: float
    compress_quality: float

    @classmethod
    def draw(cls, config: DegradationConfig, rng: np.random.Generator) -> "DegradationParams":
        def pick(lo, hi):
            return float(lo) if lo == hi else float(rng.uniform(lo, hi))

        return cls(
            blur_sigma=pick(*config.blur_sigma),
            noise_sigma=pick(*config.noise_sigma),
            compress_quality=pick(*config.compress_quality),
        )


# --------------------------------------------------------------------------
# degradation stages
# --------------------------------------------------------------------------

def gaussian_blur(video: np.ndarray, sigma: float) -> np.ndarray:
    """Separable spatial Gaussian with reflect padding; sigma=0 is the identity."""
    if sigma == 0.0:
        return np.array(video)
    radius = max(1, int(math.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel /= kernel.sum()
    out = np.asarray(video, dtype=np.float64)
    for axis in (2, 3):  # H then W of (3, T, H, W)
        pad = [(0, 0)] * out.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="reflect")
        acc = np.zeros_like(out)
        for tap, weight in enumerate(kernel):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(tap, tap + out.shape[axis])
            acc += weight * padded[tuple(sl)]
        out = acc
    return out.astype(video.dtype if np.asarray(video).dtype == np.float64 else np.float32)


def _dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * x + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    mat[0] /= math.sqrt(2.0)
    return mat


_DCT8 = _dct_matrix(8)


def block_compress(video: np.ndarray, quality: float) -> np.ndarray:
    """8x8 block-DCT uniform quantization; quality=1 is the exact identity."""
    if not (0.0 < quality <= 1.0):
        raise ConfigError(f"compress quality must be in (0, 1], got {quality}")
    if quality == 1.0:
        return np.array(video)
    step = 0.5 * (1.0 - quality) + 1e-3
    arr = np.asarray(video, dtype=np.float64)
    c, t, h, w = arr.shape
    ph, pw = (-h) % 8, (-w) % 8
    padded = np.pad(arr, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    hh, ww = padded.shape[2], padded.shape[3]
    blocks = padded.reshape(c, t, hh // 8, 8, ww // 8, 8).transpose(0, 1, 2, 4, 3, 5)
    coeff = np.einsum("ij,ctabjk,lk->ctabil", _DCT8, blocks, _DCT8, optimize=True)
    coeff = np.round(coeff / step) * step
    rec = np.einsum("ji,ctabjk,kl->ctabil", _DCT8, coeff, _DCT8, optimize=True)
    rec = rec.transpose(0, 1, 2, 4, 3, 5).reshape(c, t, hh, ww)
    return rec[:, :, :h, :w].astype(np.float32)


def degrade(hr: VideoClip | np.ndarray, params: DegradationParams, rng: np.random.Generator) -> VideoClip:
    """blur -> x4 area downsample -> additive noise -> block compression -> clip."""
    arr = hr.data if isinstance(hr, VideoClip) else np.asarray(hr)
    if arr.shape[2] % DOWNSCALE or arr.shape[3] % DOWNSCALE:
        raise DataError(f"HR dimensions {arr.shape[2:]} must be divisible by {DOWNSCALE}")
    out = gaussian_blur(arr, params.blur_sigma)
    out = area_downsample(out, DOWNSCALE)
    if params.noise_sigma > 0.0:
        out = out + params.noise_sigma * rng.standard_normal(out.shape)
    if params.compress_quality < 1.0:
        out = block_compress(out, params.compress_quality)
    return VideoClip(np.clip(out, 0.0, 1.0).astype(np.float32))


def degrade_clip(
    hr: VideoClip | np.ndarray, config: DegradationConfig, seed: int, clip_tag: int | str = 0
) -> tuple[VideoClip, DegradationParams]:
    """Per-clip parameter draw + degradation, each on its own substream."""
    params = DegradationParams.draw(config.validate(), make_rng(seed, "degrade-params", clip_tag))
    lr = degrade(hr, params, make_rng(seed, "degrade-noise", clip_tag))
    return lr, params


# --------------------------------------------------------------------------
# procedural HR sources
# --------------------------------------------------------------------------

def _unit_rescale(arr: np.ndarray, lo: float = 0.08, hi: float = 0.92) -> np.ndarray:
    a_min, a_max = float(arr.min()), float(arr.max())
    span = a_max - a_min
    if span < 1e-12:
        return np.full_like(arr, 0.5 * (lo + hi))
    return lo + (hi - lo) * (arr - a_min) / span


def _moving_patterns(frames: int, h: int, w: int, rng: np.random.Generator, motion: float) -> np.ndarray:
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    out = np.zeros((3, frames, h, w))
    for c in range(3):
        acc = np.zeros((frames, h, w))
        for _ in range(4):
            fy, fx = rng.uniform(0.5, 3.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            speed = motion * rng.uniform(-0.35, 0.35)
            amp = rng.uniform(0.5, 1.0)
            spatial = 2 * np.pi * (fy * ys / h + fx * xs / w)
            for t in range(frames):
                acc[t] += amp * np.sin(spatial + phase + speed * t)
        out[c] = acc
    return _unit_rescale(out)


def _periodic_texture(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    tex = np.zeros((3, h, w))
    for c in range(3):
        for _ in range(6):
            ky = int(rng.integers(1, max(2, h // 8)))
            kx = int(rng.integers(1, max(2, w // 8)))
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.3, 1.0)
            tex[c] += amp * np.sin(2 * np.pi * (ky * ys / h + kx * xs / w) + phase)
    return _unit_rescale(tex)


def _scroll_v(rng: np.random.Generator, motion: float) -> tuple[int, int]:
    if motion == 0:
        return 0, 0
    vy = int(round(motion * float(rng.integers(-1, 2))))
    vx = int(round(motion))
    if vx == 0 and vy == 0:
        vx = 1
    return vy, vx


def _texture_scroll(frames: int, h: int, w: int, rng: np.random.Generator, motion: float) -> np.ndarray:
    vy, vx = _scroll_v(rng, motion)  # velocity drawn first: see scroll_velocity
    tex = _periodic_texture(h, w, rng)
    out = np.zeros((3, frames, h, w))
    for t in range(frames):
        out[:, t] = np.roll(np.roll(tex, t * vy, axis=1), t * vx, axis=2)
    return out


def _shapes(frames: int, h: int, w: int, rng: np.random.Generator, motion: float) -> np.ndarray:
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    grad = 0.25 + 0.4 * (xs / max(w - 1, 1) + ys / max(h - 1, 1)) / 2.0
    out = np.broadcast_to(grad, (3, frames, h, w)).copy()
    for _ in range(3):
        cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
        vy, vx = motion * rng.uniform(-1.5, 1.5, size=2)
        radius = rng.uniform(0.08, 0.18) * min(h, w)
        color = rng.uniform(0.1, 0.9, size=3)
        for t in range(frames):
            py = cy + vy * t
            px = cx + vx * t
            d = np.sqrt((ys - py) ** 2 + (xs - px) ** 2)
            coverage = np.clip(radius + 0.5 - d, 0.0, 1.0)  # anti-aliased edge
            for c in range(3):
                out[c, t] = out[c, t] * (1 - coverage) + color[c] * coverage
    return np.clip(out, 0.05, 0.95)


def synthesize_hr(kind: str, frames: int, height: int, width: int, seed: int, motion: float = 1.0) -> VideoClip:
    """Deterministic procedural HR clip of the requested kind."""
    if kind not in HR_KINDS:
        raise ConfigError(f"unknown HR kind {kind!r}; choose from {HR_KINDS}")
    rng = make_rng(seed, "synth", kind)
    if kind == "moving-patterns":
        data = _moving_patterns(frames, height, width, rng, motion)
    elif kind == "texture-scroll":
        data = _texture_scroll(frames, height, width, rng, motion)
    else:
        data = _shapes(frames, height, width, rng, motion)
    return VideoClip(data.astype(np.float32))


def scroll_velocity(seed: int, motion: float = 1.0) -> tuple[int, int]:
    """The (vy, vx) px/frame used by texture-scroll for this seed (for GT flow)."""
    return _scroll_v(make_rng(seed, "synth", "texture-scroll"), motion)


# --------------------------------------------------------------------------
# dataset assembly
# --------------------------------------------------------------------------

def make_dataset(
    out_dir: str,
    clip_specs: list[tuple[str, int, int, int]],
    config: DegradationConfig,
    seed: int,
    motion: float = 1.0,
) -> str:
    """Write HR/LR raw pairs plus a manifest; returns the manifest path.

    ``clip_specs`` rows are (kind, frames, height, width).
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for idx, (kind, frames, height, width) in enumerate(clip_specs):
        clip_seed = seed + idx
        hr = synthesize_hr(kind, frames, height, width, clip_seed, motion=motion)
        lr, params = degrade_clip(hr, config, seed, clip_tag=idx)
        hr_path = write_raw_video(os.path.join(out_dir, f"clip{idx:04d}_hr"), hr.data)
        lr_path = write_raw_video(os.path.join(out_dir, f"clip{idx:04d}_lr"), lr.data)
        entries.append(
            {
                "index": idx,
                "kind": kind,
                "hr": os.path.basename(hr_path),
                "lr": os.path.basename(lr_path),
                "frames": frames,
                "hr_size": [height, width],
                "seed": clip_seed,
                "params": {
                    "blur_sigma": params.blur_sigma,
                    "noise_sigma": params.noise_sigma,
                    "compress_quality": params.compress_quality,
                },
            }
        )
    manifest = {"version": 1, "downscale": DOWNSCALE, "seed": seed, "clips": entries}
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_dataset(manifest_path: str) -> dict:
    if not os.path.exists(manifest_path):
        raise DataError(f"dataset manifest not found: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if "clips" not in manifest:
        raise DataError(f"not a dataset manifest: {manifest_path}")
    return manifest
