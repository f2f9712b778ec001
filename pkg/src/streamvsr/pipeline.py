"""Streaming ×4 super-resolution over unbounded frame sequences.

Frames are pushed in arrival order and upscaled chunk-by-chunk under one of
three temporal strategies:

- ``ar``: one rolling KV-cache carries context across chunks; a single
  prompt embedding (extracted from the first chunk) conditions every chunk.
- ``chunking``: the same chunk walk with a zero-capacity cache and a fresh
  prompt per chunk — every chunk is independent.
- ``aggregation``: chunks overlap by a configurable number of latent frames
  and the overlapping decoded pixels are linearly cross-faded.

The causal VAE maps the first chunk's ``4N-3`` pixel frames to ``N`` latent
frames and every later chunk's ``4N`` pixel frames to ``N`` more, so the
pipeline buffers exactly one chunk of pixels at a time.  Retained state
(cache, frame buffers, prompt) is tracked in an element-count ledger that is
independent of platform and stream length once the cache is warm.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .clips import LatentClip, VideoClip, bilinear_upscale
from .dit import ChunkContext, GeneratorModel, LayerCache, chunk_noise_rng
from .errors import ConfigError, DataError, ShapeMismatchError
from .guidance import PROMPT_POLICIES, PromptEmbedding, PromptEncoder, empty_prompt, extract_prompt
from .tensor import pause_recording
from .vae import CausalVae

__all__ = [
    "MODES",
    "UPSCALE",
    "PipelineConfig",
    "MemoryLedger",
    "StreamState",
    "StreamPipeline",
    "RunReport",
    "BenchRow",
    "BenchResult",
    "REFERENCE_POINTS_720P",
    "bench",
    "linear_fit",
    "seam_grid",
    "first_chunk_pixels",
    "default_prompt_policy",
]

MODES = ("ar", "chunking", "aggregation")
UPSCALE = 4


def default_prompt_policy(mode: str) -> str:
    """ar shares one prompt across the stream; the baselines prompt per chunk."""
    return "joint" if mode == "ar" else "separate"


def first_chunk_pixels(chunk_len: int) -> int:
    """Pixel frames consumed by the first chunk: a head frame plus N-1 groups of 4."""
    return 4 * chunk_len - 3


def _pixel_start(latent_index: int) -> int:
    """First pixel frame covered by a latent frame under the causal grouping."""
    return 0 if latent_index == 0 else 4 * latent_index - 3


def seam_grid(frames: int, chunk_len: int) -> list[int]:
    """Chunk-boundary transition indices on the canonical (non-overlapped) grid.

    Seam ``s`` means the step from frame ``s`` to ``s+1`` crosses a chunk
    boundary; the same grid is used for every mode so boundary metrics are
    comparable across modes.
    """
    seams = []
    s = first_chunk_pixels(chunk_len) - 1
    while s + 1 < frames:
        seams.append(s)
        s += 4 * chunk_len
    return seams


@dataclass
class PipelineConfig:
    mode: str = "ar"
    overlap: int = 1  # aggregation only, in latent frames
    prompt_policy: str = "auto"

    def validate(self) -> "PipelineConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.prompt_policy != "auto" and self.prompt_policy not in PROMPT_POLICIES:
            raise ConfigError(
                f"prompt_policy must be 'auto' or one of {PROMPT_POLICIES}, got {self.prompt_policy!r}"
            )
        if self.overlap < 0:
            raise ConfigError(f"overlap must be >= 0, got {self.overlap}")
        return self


@dataclass
class MemoryLedger:
    """Peak retained floating-point elements by category.

    Counts state only (attention cache, pending frame/latent/staging buffers,
    prompt embedding), never model weights, so the numbers are comparable
    across platforms and bit-reproducible.  ``post_warmup_peak`` tracks the
    total across samples taken after the first chunk has been generated; in
    ar mode it is independent of stream length.
    """

    peak_cache: int = 0
    peak_buffer: int = 0
    peak_prompt: int = 0
    peak_total: int = 0
    post_warmup_peak: int = 0
    samples: int = 0

    def record(self, cache: int, buffer: int, prompt: int, warmed: bool) -> None:
        total = cache + buffer + prompt
        self.peak_cache = max(self.peak_cache, cache)
        self.peak_buffer = max(self.peak_buffer, buffer)
        self.peak_prompt = max(self.peak_prompt, prompt)
        self.peak_total = max(self.peak_total, total)
        if warmed:
            self.post_warmup_peak = max(self.post_warmup_peak, total)
        self.samples += 1

    def category_peaks(self) -> dict[str, int]:
        return {
            "cache": self.peak_cache,
            "buffer": self.peak_buffer,
            "prompt": self.peak_prompt,
        }


@dataclass
class StreamState:
    """All mutable state of one stream; the pipeline itself stays read-only."""

    mode: str
    prompt_policy: str
    overlap: int
    seed: int
    ledger: MemoryLedger = field(default_factory=MemoryLedger)
    lr_size: tuple[int, int] | None = None
    consumed: int = 0  # real LR frames accepted
    padded: int = 0  # repeat-padding appended at flush
    emitted: int = 0  # real HR frames handed out
    chunk_index: int = 0  # generator forwards issued
    warmed: bool = False
    closed: bool = False
    # ar / chunking state
    ctx: ChunkContext | None = None
    buffer: list[np.ndarray] = field(default_factory=list)
    joint_prompt: PromptEmbedding | None = None
    # aggregation state
    pixels: list[np.ndarray] = field(default_factory=list)  # LR frames from pixel_base
    pixel_base: int = 0
    pixels_encoded: int = 0
    latents: np.ndarray | None = None  # (C, f, h, w) from latent_base
    latent_base: int = 0
    latent_count: int = 0
    next_start: int = 0  # next scheduled window start, latent index
    last_run_start: int = -1
    stage: np.ndarray | None = None  # blended HR frames from stage_base
    stage_base: int = 0
    blend_records: list[tuple[int, float, float]] = field(default_factory=list)

    def buffer_elements(self) -> int:
        if self.lr_size is None:
            return 0
        per_frame = 3 * self.lr_size[0] * self.lr_size[1]
        n = (len(self.buffer) + len(self.pixels)) * per_frame
        if self.latents is not None:
            n += self.latents.size
        if self.stage is not None:
            n += self.stage.size
        return n

    def prompt_elements(self) -> int:
        prompt = self.ctx.prompt if self.ctx is not None else self.joint_prompt
        if prompt is None:
            return 0
        tokens = prompt.tokens
        data = tokens.data if hasattr(tokens, "data") else tokens
        return int(np.size(data))

    def cache_elements(self) -> int:
        return self.ctx.cache_elements() if self.ctx is not None else 0


@dataclass
class RunReport:
    """Accounting for one full run: counts, seams, memory, and blend weights."""

    mode: str
    prompt_policy: str
    overlap: int
    frames_in: int
    frames_out: int
    chunk_count: int
    forward_count: int
    seam_transitions: list[int]
    ledger: MemoryLedger
    blend_records: list[tuple[int, float, float]]
    wall_time: float

    def validate(self) -> "RunReport":
        if self.frames_out != self.frames_in:
            raise DataError(
                f"emitted {self.frames_out} frames for {self.frames_in} inputs"
            )
        if self.forward_count != self.chunk_count:
            raise DataError(
                f"{self.forward_count} generator forwards for {self.chunk_count} chunks"
            )
        for frame, w_prev, w_new in self.blend_records:
            if abs((w_prev + w_new) - 1.0) > 1e-12:
                raise DataError(f"blend weights at frame {frame} do not sum to 1")
        return self


class StreamPipeline:
    """Binds a generator, causal VAE, and prompt encoder into a frame pump."""

    def __init__(
        self,
        model: GeneratorModel,
        vae: CausalVae,
        prompt_encoder: PromptEncoder,
        config: PipelineConfig | None = None,
        seed: int = 0,
    ):
        config = (config or PipelineConfig()).validate()
        if prompt_encoder.config.model_dim != model.config.model_dim:
            raise ConfigError(
                f"prompt encoder emits dim {prompt_encoder.config.model_dim}, "
                f"generator expects {model.config.model_dim}"
            )
        if vae.config.latent_channels != model.config.latent_channels:
            raise ConfigError(
                f"VAE latent channels {vae.config.latent_channels} != "
                f"generator latent channels {model.config.latent_channels}"
            )
        self.model = model
        self.vae = vae
        self.prompt_encoder = prompt_encoder
        self.config = config
        self.seed = seed

    # ------------------------------------------------------------------ setup

    def start(
        self,
        seed: int | None = None,
        mode: str | None = None,
        prompt_policy: str | None = None,
    ) -> StreamState:
        mode = self.config.mode if mode is None else mode
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        policy = self.config.prompt_policy if prompt_policy is None else prompt_policy
        if policy == "auto":
            policy = default_prompt_policy(mode)
        if policy not in PROMPT_POLICIES:
            raise ConfigError(f"unknown prompt policy {policy!r}")
        if mode == "aggregation" and self.config.overlap >= self.model.config.chunk_len:
            raise ConfigError(
                f"overlap {self.config.overlap} must be < chunk_len "
                f"{self.model.config.chunk_len} for aggregation"
            )
        return StreamState(
            mode=mode,
            prompt_policy=policy,
            overlap=self.config.overlap,
            seed=self.seed if seed is None else seed,
        )

    def _quota(self, state: StreamState) -> int:
        n = self.model.config.chunk_len
        return first_chunk_pixels(n) if state.chunk_index == 0 else 4 * n

    def _check_frame(self, state: StreamState, frame: np.ndarray) -> None:
        if frame.shape[0] != 3 or frame.ndim != 3:
            raise ShapeMismatchError(f"LR frames must be (3, h, w), got {frame.shape}")
        h, w = frame.shape[1], frame.shape[2]
        if state.lr_size is None:
            if h % 2 or w % 2:
                raise DataError(f"LR frames need even extents for the ×4→/8 path, got {h}x{w}")
            cfg = self.model.config
            for name, extent in (("height", h), ("width", w)):
                lat = (extent * UPSCALE) // 8
                if lat % cfg.patch_size:
                    raise ConfigError(
                        f"latent {name} {lat} is not divisible by patch size {cfg.patch_size}"
                    )
                if lat // cfg.patch_size > cfg.max_grid:
                    raise ConfigError(
                        f"latent {name} {lat} exceeds the positional grid "
                        f"({cfg.max_grid} patches of {cfg.patch_size})"
                    )
            state.lr_size = (h, w)
        elif state.lr_size != (h, w):
            raise ShapeMismatchError(
                f"frame size changed mid-stream: {state.lr_size} -> {(h, w)}"
            )
        lo, hi = float(frame.min()), float(frame.max())
        if lo < -1e-4 or hi > 1 + 1e-4:
            raise DataError(f"LR pixel values outside [0,1]: range [{lo:.4f}, {hi:.4f}]")

    def _record(self, state: StreamState) -> None:
        state.ledger.record(
            cache=state.cache_elements(),
            buffer=state.buffer_elements(),
            prompt=state.prompt_elements(),
            warmed=state.warmed,
        )

    def _empty(self, state: StreamState) -> np.ndarray:
        if state.lr_size is None:
            return np.zeros((3, 0, 0, 0))
        return np.zeros((3, 0, state.lr_size[0] * UPSCALE, state.lr_size[1] * UPSCALE))

    # ----------------------------------------------------------------- prompts

    def _extract_up(self, up_frames: np.ndarray, selector) -> PromptEmbedding:
        return extract_prompt(up_frames, self.prompt_encoder, selector=selector).detached()

    def _stream_prompt(self, state: StreamState, up_chunk: np.ndarray) -> PromptEmbedding:
        """Prompt for the next ar/chunking chunk, from its upscaled pixels."""
        if state.prompt_policy == "none":
            if state.joint_prompt is None:
                state.joint_prompt = empty_prompt(self.model.config.model_dim)
            return state.joint_prompt
        if state.prompt_policy == "joint":
            if state.joint_prompt is None:
                state.joint_prompt = self._extract_up(up_chunk, "middle")
            return state.joint_prompt
        return self._extract_up(up_chunk, "middle")

    def _window_prompt(self, state: StreamState, start: int) -> PromptEmbedding:
        """Prompt for an aggregation window from the middle frame of its span."""
        if state.prompt_policy == "none":
            if state.joint_prompt is None:
                state.joint_prompt = empty_prompt(self.model.config.model_dim)
            return state.joint_prompt
        n = self.model.config.chunk_len
        p0 = _pixel_start(start)
        span = (first_chunk_pixels(n) if start == 0 else 4 * n)
        middle = p0 + span // 2
        if state.prompt_policy == "joint":
            if state.joint_prompt is None:
                first_middle = first_chunk_pixels(n) // 2
                frame = state.pixels[first_middle - state.pixel_base]
                up = bilinear_upscale(frame[:, None], UPSCALE)
                state.joint_prompt = self._extract_up(up, "middle")
            return state.joint_prompt
        frame = state.pixels[middle - state.pixel_base]
        return self._extract_up(bilinear_upscale(frame[:, None], UPSCALE), "middle")

    # ------------------------------------------------------------- ar/chunking

    def _generate_stream_chunk(self, state: StreamState, real_count: int) -> np.ndarray:
        quota = self._quota(state)
        if len(state.buffer) != quota:
            raise DataError(f"chunk needs {quota} buffered frames, has {len(state.buffer)}")
        chunk = np.stack(state.buffer, axis=1)
        state.buffer.clear()
        first = state.chunk_index == 0
        cache_len = 0 if state.mode == "chunking" else self.model.config.cache_len
        with pause_recording():
            up = bilinear_upscale(chunk, UPSCALE)
            prompt = self._stream_prompt(state, up)
            z_lr = self.vae.encode(VideoClip(up), first=first).data
            if state.ctx is None:
                state.ctx = ChunkContext.fresh(self.model, prompt)
            else:
                state.ctx.prompt = prompt
            with _cache_limit(self.model, cache_len):
                hr_lat, state.ctx = self.model.generate_chunk(
                    np.ascontiguousarray(z_lr[None]),
                    state.ctx,
                    chunk_noise_rng(state.seed, state.chunk_index),
                    chunk_index=state.chunk_index,
                )
            hr = self.vae.decode(LatentClip(hr_lat.data[0]), first=first).data
        hr = np.clip(hr, 0.0, 1.0)
        state.chunk_index += 1
        state.warmed = True
        emit = hr if real_count == hr.shape[1] else hr[:, :real_count]
        state.emitted += emit.shape[1]
        self._record(state)
        return emit

    # -------------------------------------------------------------- aggregation

    def _encode_ready_units(self, state: StreamState) -> None:
        """Advance the incremental causal encoder over buffered pixels."""
        while True:
            need = 1 if state.latent_count == 0 else 4
            available = state.consumed + state.padded - state.pixels_encoded
            if available < need:
                return
            lo = state.pixels_encoded - state.pixel_base
            unit = np.stack(state.pixels[lo : lo + need], axis=1)
            with pause_recording():
                up = bilinear_upscale(unit, UPSCALE)
                z = self.vae.encode(VideoClip(up), first=(state.latent_count == 0)).data
            if state.latents is None:
                state.latents = z
            else:
                state.latents = np.concatenate([state.latents, z], axis=1)
            state.pixels_encoded += need
            state.latent_count += 1

    def _run_window(self, state: StreamState, start: int) -> None:
        """Generate one aggregation window and cross-fade it into the stage."""
        n = self.model.config.chunk_len
        zs = state.latents[:, start - state.latent_base : start - state.latent_base + n]
        first = start == 0
        p0 = _pixel_start(start)
        with pause_recording():
            prompt = self._window_prompt(state, start)
            ctx = ChunkContext(
                layers=[LayerCache() for _ in range(self.model.config.layers)],
                prompt=prompt,
                frames_seen=start,
            )
            hr_lat, _ = self.model.generate_chunk(
                np.ascontiguousarray(zs[None]),
                ctx,
                chunk_noise_rng(state.seed, state.chunk_index),
            )
            hr = self.vae.decode(LatentClip(hr_lat.data[0]), first=first).data
        hr = np.clip(hr, 0.0, 1.0)
        state.chunk_index += 1
        state.warmed = True
        if state.stage is None:
            state.stage = hr
            state.stage_base = p0
        else:
            stage_end = state.stage_base + state.stage.shape[1]
            n_ov = stage_end - p0
            if n_ov < 0:
                raise DataError(f"window at latent {start} leaves a coverage gap")
            for j in range(n_ov):
                w_new = (j + 1) / (n_ov + 1)
                w_prev = 1.0 - w_new
                idx = p0 + j - state.stage_base
                state.stage[:, idx] = w_prev * state.stage[:, idx] + w_new * hr[:, j]
                state.blend_records.append((p0 + j, w_prev, w_new))
            state.stage = np.concatenate([state.stage, hr[:, n_ov:]], axis=1)
        state.last_run_start = start
        # Future windows start at latent >= start+1, i.e. pixel >= 4*start+1:
        # earlier latents and pixels can be dropped.
        keep_lat = start + 1
        drop = keep_lat - state.latent_base
        if drop > 0:
            state.latents = state.latents[:, drop:]
            state.latent_base = keep_lat
        keep_px = _pixel_start(keep_lat)
        drop = keep_px - state.pixel_base
        if drop > 0:
            del state.pixels[:drop]
            state.pixel_base = keep_px
        self._record(state)

    def _drain_stage(self, state: StreamState, horizon: int) -> np.ndarray:
        """Emit staged frames below ``horizon`` (no future window reaches them)."""
        horizon = min(horizon, state.consumed)
        if state.stage is None or horizon <= state.emitted:
            return self._empty(state)
        take = horizon - state.stage_base
        emit = state.stage[:, :take]
        state.stage = state.stage[:, take:]
        state.stage_base = horizon
        state.emitted += emit.shape[1]
        return emit

    def _push_aggregation(self, state: StreamState) -> list[np.ndarray]:
        out = []
        self._encode_ready_units(state)
        n = self.model.config.chunk_len
        stride = n - state.overlap
        while state.latent_count >= state.next_start + n:
            self._run_window(state, state.next_start)
            state.next_start += stride
            out.append(self._drain_stage(state, _pixel_start(state.last_run_start + 1)))
        return out

    def _flush_aggregation(self, state: StreamState) -> list[np.ndarray]:
        n = self.model.config.chunk_len
        stride = n - state.overlap
        n_lat = max(1 + math.ceil((state.consumed - 1) / 4), n)
        target_px = 4 * (n_lat - 1) + 1
        state.padded = target_px - state.consumed
        if state.padded:
            last = state.pixels[-1]
            state.pixels.extend(last.copy() for _ in range(state.padded))
        self._encode_ready_units(state)
        out = []
        while state.next_start <= n_lat - n:
            self._run_window(state, state.next_start)
            state.next_start += stride
        if n_lat - n > state.last_run_start:
            self._run_window(state, n_lat - n)
        out.append(self._drain_stage(state, state.consumed))
        return out

    # ---------------------------------------------------------------- frontend

    def push_frames(self, state: StreamState, lr_frames: np.ndarray) -> np.ndarray:
        """Accept LR frames in order; return every HR frame that became ready."""
        if state.closed:
            raise DataError("stream already flushed; start a new one")
        frames = np.asarray(lr_frames)
        if not np.issubdtype(frames.dtype, np.floating):
            frames = frames.astype(np.float64)
        if frames.ndim == 3:
            frames = frames[:, None]
        if frames.ndim != 4 or frames.shape[0] != 3:
            raise ShapeMismatchError(f"push expects (3, t, h, w) frames, got {frames.shape}")
        out = []
        for t in range(frames.shape[1]):
            frame = frames[:, t]
            self._check_frame(state, frame)
            state.consumed += 1
            if state.mode == "aggregation":
                state.pixels.append(frame)
                self._record(state)
                out.extend(self._push_aggregation(state))
            else:
                state.buffer.append(frame)
                self._record(state)
                if len(state.buffer) == self._quota(state):
                    out.append(self._generate_stream_chunk(state, real_count=len(state.buffer)))
        out = [part for part in out if part.shape[1]]
        if not out:
            return self._empty(state)
        return np.concatenate(out, axis=1)

    def flush(self, state: StreamState) -> np.ndarray:
        """Close the stream: pad the final partial chunk and emit the rest."""
        if state.closed:
            raise DataError("stream already flushed")
        state.closed = True
        if state.consumed == 0:
            return self._empty(state)
        if state.mode == "aggregation":
            parts = [p for p in self._flush_aggregation(state) if p.shape[1]]
            if not parts:
                return self._empty(state)
            return np.concatenate(parts, axis=1)
        if not state.buffer:
            return self._empty(state)
        real = len(state.buffer)
        quota = self._quota(state)
        state.padded = quota - real
        last = state.buffer[-1]
        state.buffer.extend(last.copy() for _ in range(state.padded))
        return self._generate_stream_chunk(state, real_count=real)

    def run_mode(
        self,
        lr_video: np.ndarray,
        mode: str | None = None,
        prompt_policy: str | None = None,
        seed: int | None = None,
    ) -> tuple[np.ndarray, RunReport]:
        """Upscale a whole clip through the streaming path; returns (HR, report)."""
        video = np.asarray(lr_video)
        if not np.issubdtype(video.dtype, np.floating):
            video = video.astype(np.float64)
        if video.ndim != 4 or video.shape[0] != 3:
            raise ShapeMismatchError(f"expected LR video (3, T, h, w), got {video.shape}")
        if video.shape[1] < 1:
            raise DataError("empty stream")
        t0 = time.perf_counter()
        forwards_before = self.model.forward_count
        state = self.start(seed=seed, mode=mode, prompt_policy=prompt_policy)
        parts = [self.push_frames(state, video), self.flush(state)]
        hr = np.concatenate([p for p in parts if p.shape[1]], axis=1)
        report = RunReport(
            mode=state.mode,
            prompt_policy=state.prompt_policy,
            overlap=state.overlap,
            frames_in=video.shape[1],
            frames_out=hr.shape[1],
            chunk_count=state.chunk_index,
            forward_count=self.model.forward_count - forwards_before,
            seam_transitions=seam_grid(video.shape[1], self.model.config.chunk_len),
            ledger=state.ledger,
            blend_records=list(state.blend_records),
            wall_time=time.perf_counter() - t0,
        )
        return hr, report.validate()

    run = run_mode


@contextmanager
def _cache_limit(model: GeneratorModel, cache_len: int | None):
    """Temporarily clamp the model's cache capacity (used by chunking mode)."""
    prev = model.config
    if cache_len == prev.cache_len:
        yield
        return
    model.config = replace(prev, cache_len=cache_len)
    try:
        yield
    finally:
        model.config = prev


# ------------------------------------------------------------------ benchmark

# Reference measurements from a full-scale 720p system, kept alongside toy
# rows for context; toy-scale numbers are not comparable in absolute terms.
REFERENCE_POINTS_720P = (
    {"frames": 33, "resolution": "720p", "runtime_s": 6.82, "memory_gb": 20.39},
    {"frames": 100, "resolution": "720p", "runtime_s": 20.70, "memory_gb": 20.39},
)


@dataclass
class BenchRow:
    frames: int
    chunks: int
    wall_time: float
    peak_cache: int
    peak_buffer: int
    peak_prompt: int
    post_warmup_peak: int

    def state_cells(self) -> list:
        return [
            self.frames,
            self.chunks,
            self.peak_cache,
            self.peak_buffer,
            self.peak_prompt,
            self.post_warmup_peak,
        ]


STATE_HEADER = ["frames", "chunks", "peak_cache", "peak_buffer", "peak_prompt", "post_warmup_peak"]
TIMING_HEADER = ["frames", "wall_time_s"]


@dataclass
class BenchResult:
    mode: str
    rows: list[BenchRow]
    slope: float
    intercept: float
    r_squared: float
    reference_points: tuple = REFERENCE_POINTS_720P

    def constant_memory(self) -> bool:
        peaks = {row.post_warmup_peak for row in self.rows}
        return len(peaks) == 1


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line through (xs, ys); returns (slope, intercept, R²)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 2:
        raise DataError("linear fit needs at least two points")
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(residual**2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def bench(
    pipeline: StreamPipeline,
    frame_counts: Sequence[int],
    make_video: Callable[[int], np.ndarray],
    mode: str | None = None,
    warmup: bool = True,
) -> BenchResult:
    """Time full runs over increasing stream lengths and fit time vs frames."""
    counts = list(frame_counts)
    if not counts:
        raise ConfigError("bench needs at least one frame count")
    if warmup:
        pipeline.run_mode(make_video(min(counts)), mode=mode)
    rows = []
    for frames in counts:
        _, report = pipeline.run_mode(make_video(frames), mode=mode)
        rows.append(
            BenchRow(
                frames=frames,
                chunks=report.chunk_count,
                wall_time=report.wall_time,
                peak_cache=report.ledger.peak_cache,
                peak_buffer=report.ledger.peak_buffer,
                peak_prompt=report.ledger.peak_prompt,
                post_warmup_peak=report.ledger.post_warmup_peak,
            )
        )
    slope, intercept, r2 = linear_fit([r.frames for r in rows], [r.wall_time for r in rows])
    return BenchResult(
        mode=mode or pipeline.config.mode,
        rows=rows,
        slope=slope,
        intercept=intercept,
        r_squared=r2,
    )
