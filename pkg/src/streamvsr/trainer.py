"""Two-stage training: patch-supervised starts, then self-forced rollouts.

Stage I teaches one-step restoration on isolated first chunks.  Stage II
rolls the generator over consecutive chunks through its own KV cache —
exactly as it streams at inference — and adds a distribution-matching
gradient on triplets of generated chunks.  Pixel objectives are evaluated on
crop-aligned local decodes, so the frozen VAE never decodes a full frame.

Determinism contract: every random draw is keyed by (seed, purpose, step)
and, where it matters for gradient accumulation, by the sample index — a
batch of B and the same batch split into accumulation groups see identical
noise, windows, and prompts.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import report as report_mod
from . import tensor as T
from . import tnsr
from .clips import bilinear_upscale, crop_pix
from .dit import ChunkContext, GeneratorModel
from .errors import ConfigError, DataError, NonFiniteError, NumericalError, ShapeMismatchError
from .guidance import PromptEmbedding, PromptEncoder, extract_prompt
from .losses import (
    LossWeights,
    PerceptualBank,
    ScoreNet,
    ScorePair,
    dmd_generator_gradient,
    dmd_surrogate,
    fidelity_loss,
    sample_patch_window,
    temporal_loss,
    update_fake_score,
)
from .nn import AdamW
from .pipeline import UPSCALE, first_chunk_pixels
from .rng import make_rng
from .tensor import GradTape, Tensor, pause_recording
from .vae import CausalVae

LOSS_HEADER = ("step", "l_mse", "l_dists", "l_temp", "l_dmd", "l_fake_score")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class StageConfig:
    """One training stage: clip geometry, supervision window, optimization."""

    stage: str = "I"                # "I" (single chunk) or "II" (rollouts)
    steps: int = 100
    clip_frames: int = 9            # pixel frames per training clip (4n+1)
    clip_height: int = 64           # HR pixel extents (multiples of 8)
    clip_width: int = 64
    window_h: int = 32              # supervised crop, HR pixels (multiples of 8)
    window_w: int = 32
    batch_size: int = 2
    learning_rate: float = 5e-5
    grad_accum_steps: int = 1
    rollout_chunks: int = 3         # stage II: chunks per self-forced rollout
    fake_learning_rate: float = 1e-4
    score_fit_steps: int = 150      # stage II: frozen-score fitting on HQ latents

    def validate(self) -> "StageConfig":
        if self.stage not in ("I", "II"):
            raise ConfigError(f"stage must be 'I' or 'II', got {self.stage!r}")
        for name in ("steps", "clip_frames", "clip_height", "clip_width",
                     "window_h", "window_w", "batch_size", "grad_accum_steps",
                     "rollout_chunks"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if (self.clip_frames - 1) % 4:
            raise ConfigError(f"clips need 4n+1 frames, got {self.clip_frames}")
        for name in ("clip_height", "clip_width", "window_h", "window_w"):
            if getattr(self, name) % 8:
                raise ConfigError(f"{name} must be a multiple of 8 pixels")
        if self.window_h > self.clip_height or self.window_w > self.clip_width:
            raise ConfigError("supervision window exceeds the clip extents")
        if self.learning_rate < 0 or self.fake_learning_rate < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.batch_size % self.grad_accum_steps:
            raise ConfigError(
                f"batch of {self.batch_size} does not split into "
                f"{self.grad_accum_steps} equal accumulation groups"
            )
        if self.score_fit_steps < 0:
            raise ConfigError("score_fit_steps must be non-negative")
        return self


def stage1_defaults() -> StageConfig:
    """Desk-scale stage I: single 9-frame chunks, 64px clips, 32px windows."""
    return StageConfig(stage="I", clip_frames=9, clip_height=64, clip_width=64,
                       window_h=32, window_w=32, learning_rate=5e-5)


def stage2_defaults() -> StageConfig:
    """Desk-scale stage II: 33-frame rollouts on 32x48 clips, 16px windows."""
    return StageConfig(stage="II", clip_frames=33, clip_height=32, clip_width=48,
                       window_h=16, window_w=16, learning_rate=1e-5)


# --------------------------------------------------------------------------
# training data
# --------------------------------------------------------------------------

@dataclass
class ClipBatch:
    """Stacked HQ/LQ clip pairs: hq (B,3,T,H,W), lq (B,3,T,H/4,W/4)."""

    hq: np.ndarray
    lq: np.ndarray

    def validate(self) -> "ClipBatch":
        hq, lq = np.asarray(self.hq), np.asarray(self.lq)
        if hq.ndim != 5 or hq.shape[1] != 3 or lq.ndim != 5 or lq.shape[1] != 3:
            raise DataError(
                f"clip batches are (B,3,T,H,W) pairs, got {hq.shape} / {lq.shape}"
            )
        if hq.shape[0] != lq.shape[0] or hq.shape[2] != lq.shape[2]:
            raise DataError(f"HQ/LQ batch mismatch: {hq.shape} vs {lq.shape}")
        if hq.shape[3] != UPSCALE * lq.shape[3] or hq.shape[4] != UPSCALE * lq.shape[4]:
            raise DataError(
                f"HQ must be {UPSCALE}x the LQ extents: {hq.shape} vs {lq.shape}"
            )
        return self

    @property
    def batch_size(self) -> int:
        return self.hq.shape[0]


class ClipSampler:
    """Uniform training crops from a pool of full-size (HQ, LQ) pairs.

    Spatial offsets snap to multiples of 8 HR pixels so the crop stays
    latent-aligned and slices the LQ clip integrally.
    """

    def __init__(self, pairs):
        self.pairs = [(np.asarray(h), np.asarray(l)) for h, l in pairs]
        if not self.pairs:
            raise DataError("clip sampler needs at least one (HQ, LQ) pair")
        for hq, lq in self.pairs:
            ClipBatch(hq[None], lq[None]).validate()

    def sample(self, cfg: StageConfig, rng: np.random.Generator) -> ClipBatch:
        hqs, lqs = [], []
        for _ in range(cfg.batch_size):
            hq, lq = self.pairs[int(rng.integers(len(self.pairs)))]
            frames, height, width = hq.shape[1:]
            if (frames < cfg.clip_frames or height < cfg.clip_height
                    or width < cfg.clip_width):
                raise DataError(
                    f"source clip {hq.shape} smaller than training clip "
                    f"{cfg.clip_frames}x{cfg.clip_height}x{cfg.clip_width}"
                )
            t0 = int(rng.integers(0, frames - cfg.clip_frames + 1))
            y0 = 8 * int(rng.integers(0, (height - cfg.clip_height) // 8 + 1))
            x0 = 8 * int(rng.integers(0, (width - cfg.clip_width) // 8 + 1))
            hqs.append(hq[:, t0:t0 + cfg.clip_frames,
                          y0:y0 + cfg.clip_height, x0:x0 + cfg.clip_width])
            lqs.append(lq[:, t0:t0 + cfg.clip_frames,
                          y0 // UPSCALE:(y0 + cfg.clip_height) // UPSCALE,
                          x0 // UPSCALE:(x0 + cfg.clip_width) // UPSCALE])
        return ClipBatch(np.ascontiguousarray(np.stack(hqs)),
                         np.ascontiguousarray(np.stack(lqs))).validate()


# --------------------------------------------------------------------------
# records and reports
# --------------------------------------------------------------------------

@dataclass
class StepRecord:
    """One optimizer step's loss components (unweighted where raw)."""

    step: int
    l_mse: float
    l_dists: float
    l_temp: float
    l_dmd: float
    l_fake_score: float

    def row(self) -> list:
        return [self.step, self.l_mse, self.l_dists, self.l_temp,
                self.l_dmd, self.l_fake_score]

    def all_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.row()[1:])


@dataclass
class StageReport:
    """Loss trajectory of one completed stage."""

    stage: str
    records: list = field(default_factory=list)
    wall_time: float = 0.0
    checkpoint: str | None = None

    def final(self) -> StepRecord | None:
        return self.records[-1] if self.records else None

    def summary(self) -> dict:
        out = {"stage": self.stage, "steps": len(self.records),
               "wall_time_s": self.wall_time, "checkpoint": self.checkpoint}
        if self.records:
            last = self.final()
            out["final"] = {k: getattr(last, k) for k in LOSS_HEADER}
        return out


# --------------------------------------------------------------------------
# deterministic noise plumbing
# --------------------------------------------------------------------------

class _PreparedDraws:
    """Hands out pre-drawn standard-normal arrays in order.

    The generator draws its chunk noise from whatever object exposes
    ``standard_normal``; preparing the draws per sample makes them invariant
    to how a batch is split into accumulation groups.
    """

    def __init__(self):
        self._queue: list[np.ndarray] = []

    def push(self, arr: np.ndarray) -> None:
        self._queue.append(np.asarray(arr))

    def standard_normal(self, shape) -> np.ndarray:
        if not self._queue:
            raise DataError("prepared noise queue is empty")
        arr = self._queue.pop(0)
        if tuple(arr.shape) != tuple(shape):
            raise ShapeMismatchError(
                f"prepared noise {arr.shape} does not match requested {tuple(shape)}"
            )
        return arr


def _sample_noise(seed: int, step: int, chunk: int, rows: range, shape) -> np.ndarray:
    draws = [
        make_rng(seed, "train-noise", step, chunk, int(b)).standard_normal((1,) + tuple(shape))
        for b in rows
    ]
    return np.concatenate(draws, axis=0)


def _split_rows(total: int, groups: int) -> list[tuple[int, int]]:
    if total % groups:
        raise ConfigError(f"batch of {total} does not split into {groups} groups")
    size = total // groups
    return [(g * size, (g + 1) * size) for g in range(groups)]


def _chunk_pixel_spans(n_chunks: int, chunk_len: int) -> list[tuple[int, int]]:
    spans, end = [], 0
    for k in range(n_chunks):
        width = first_chunk_pixels(chunk_len) if k == 0 else 4 * chunk_len
        spans.append((end, end + width))
        end += width
    return spans


def _const(value: float, dtype) -> Tensor:
    return Tensor(np.asarray(value, dtype))


# --------------------------------------------------------------------------
# the trainer
# --------------------------------------------------------------------------

class Trainer:
    """Owns the generator, its frozen companions, and the stage machinery.

    The VAE, prompt encoder, and perceptual bank are frozen: gradients flow
    through their operations into the generator, but their parameters never
    change.  Stage II additionally holds a frozen target-distribution score
    and a live generator-distribution score updated between generator steps.
    """

    def __init__(self, model: GeneratorModel, vae: CausalVae,
                 prompt_encoder: PromptEncoder, weights: LossWeights | None = None,
                 seed: int = 0, score_width: int = 32):
        if model.dtype != vae.dtype:
            raise ConfigError("generator and VAE must share a dtype for training")
        if prompt_encoder.config.model_dim != model.config.model_dim:
            raise ShapeMismatchError(
                f"prompt dim {prompt_encoder.config.model_dim} != "
                f"model dim {model.config.model_dim}"
            )
        if vae.config.latent_channels != model.config.latent_channels:
            raise ShapeMismatchError(
                f"VAE latent channels {vae.config.latent_channels} != "
                f"generator channels {model.config.latent_channels}"
            )
        self.model = model
        self.vae = vae
        self.prompt_encoder = prompt_encoder
        self.weights = (weights if weights is not None
                        else LossWeights(mse=1.0, dists=1.0, temp=1.0, dmd=1.0)).validate()
        self.seed = int(seed)
        self.score_width = int(score_width)
        self.bank = PerceptualBank(dtype=model.dtype)
        self.vae.freeze()
        self.prompt_encoder.freeze()
        self.step = 0
        self.cfg: StageConfig | None = None
        self.optimizer: AdamW | None = None
        self.scores: ScorePair | None = None
        self.fake_optimizer: AdamW | None = None

    # -- stage lifecycle -----------------------------------------------------

    def begin_stage(self, cfg: StageConfig, sampler: ClipSampler | None = None,
                    scores: ScorePair | None = None) -> None:
        """Validate geometry, build the stage optimizer, and prepare scores.

        Stage II fits the frozen target score on HQ latents drawn from
        ``sampler`` (skipped when no sampler is given), then clones it as the
        starting point of the live score.
        """
        cfg = cfg.validate()
        self._check_geometry(cfg)
        self.cfg = cfg
        self.optimizer = AdamW(self.model.named_params(), lr=cfg.learning_rate)
        if cfg.stage == "II" and (self.weights.dmd > 0 or scores is not None):
            if self.weights.dmd > 0 and cfg.rollout_chunks != 3:
                raise ConfigError(
                    "distribution matching needs 3-chunk rollouts "
                    f"(got rollout_chunks={cfg.rollout_chunks})"
                )
            if scores is not None:
                self.scores = scores.validate()
            else:
                self._init_scores(cfg, sampler)
            self.fake_optimizer = AdamW(
                self.scores.fake.named_params(), lr=cfg.fake_learning_rate
            )
        else:
            self.scores = None
            self.fake_optimizer = None

    def _check_geometry(self, cfg: StageConfig) -> None:
        n = self.model.config.chunk_len
        if cfg.stage == "I":
            if cfg.clip_frames != first_chunk_pixels(n):
                raise ConfigError(
                    f"stage I clips cover exactly one chunk: {first_chunk_pixels(n)} "
                    f"frames for chunk_len {n}, got {cfg.clip_frames}"
                )
        else:
            lat_frames = 1 + (cfg.clip_frames - 1) // 4
            if lat_frames != n * cfg.rollout_chunks:
                raise ConfigError(
                    f"stage II clips must cover {cfg.rollout_chunks} whole chunks: "
                    f"need {4 * n * cfg.rollout_chunks - 3} frames, got {cfg.clip_frames}"
                )
        lat_h, lat_w = cfg.clip_height // 8, cfg.clip_width // 8
        patch = self.model.config.patch_size
        if lat_h % patch or lat_w % patch:
            raise ConfigError(
                f"latent grid {lat_h}x{lat_w} is not divisible by patch size {patch}"
            )

    def _init_scores(self, cfg: StageConfig, sampler: ClipSampler | None) -> None:
        channels = self.model.config.latent_channels
        init_seed = 1000 + self.seed
        real = ScoreNet(channels, width=self.score_width, init_seed=init_seed,
                        dtype=self.model.dtype)
        if sampler is not None and cfg.score_fit_steps:
            fit_opt = AdamW(real.named_params(), lr=cfg.fake_learning_rate)
            pair = ScorePair(real=real, fake=real)
            spans = _chunk_pixel_spans(cfg.rollout_chunks, self.model.config.chunk_len)
            for s in range(cfg.score_fit_steps):
                batch = sampler.sample(cfg, make_rng(self.seed, "score-data", s))
                hq = np.ascontiguousarray(batch.hq, dtype=self.vae.dtype)
                zs = [self._encode_pixels(hq[:, :, a:b], first=(k == 0))
                      for k, (a, b) in enumerate(spans)]
                update_fake_score(zs, pair, make_rng(self.seed, "score-fit", s), fit_opt)
        real.freeze()
        fake = ScoreNet(channels, width=self.score_width, init_seed=init_seed,
                        dtype=self.model.dtype)
        fake.clone_from(real)
        self.scores = ScorePair(real=real, fake=fake)

    def _require_stage(self, stage: str) -> StageConfig:
        if self.cfg is None or self.optimizer is None:
            raise ConfigError("call begin_stage before taking training steps")
        if self.cfg.stage != stage:
            raise ConfigError(f"current stage is {self.cfg.stage}, not {stage}")
        return self.cfg

    # -- shared plumbing -------------------------------------------------------

    def _encode_pixels(self, pixels: np.ndarray, first: bool) -> np.ndarray:
        with pause_recording():
            mu, _ = self.vae.encode_t(
                Tensor(np.ascontiguousarray(pixels, dtype=self.vae.dtype)), first=first
            )
        return mu.data

    def _batch_prompt(self, up: np.ndarray, frame_idx: int) -> PromptEmbedding:
        rows = []
        with pause_recording():
            for b in range(up.shape[0]):
                emb = extract_prompt(up[b], self.prompt_encoder, selector=frame_idx)
                tok = emb.tokens.data if isinstance(emb.tokens, Tensor) else emb.tokens
                rows.append(np.asarray(tok))
        stacked = np.stack(rows).astype(self.model.dtype)
        return PromptEmbedding(tokens=Tensor(stacked), source_frame_indices=[frame_idx])

    @staticmethod
    def _prompt_rows(prompt: PromptEmbedding, start: int, stop: int) -> PromptEmbedding:
        tok = prompt.tokens
        data = tok.data if isinstance(tok, Tensor) else np.asarray(tok)
        return PromptEmbedding(tokens=Tensor(data[start:stop]),
                               source_frame_indices=list(prompt.source_frame_indices))

    def _check_batch(self, cfg: StageConfig, batch: ClipBatch) -> int:
        batch.validate()
        got = batch.hq.shape[2:]
        want = (cfg.clip_frames, cfg.clip_height, cfg.clip_width)
        if tuple(got) != want:
            raise DataError(f"batch clips are {got}, stage expects {want}")
        total = batch.batch_size
        if total % cfg.grad_accum_steps:
            raise DataError(
                f"batch of {total} does not split into {cfg.grad_accum_steps} groups"
            )
        return total

    def _check_finite(self, rec: StepRecord) -> None:
        if not rec.all_finite():
            raise NonFiniteError(
                f"non-finite training loss at step {rec.step}: "
                + ", ".join(f"{k}={getattr(rec, k)}" for k in LOSS_HEADER[1:])
            )

    # -- stage I ---------------------------------------------------------------

    def stage1_step(self, batch: ClipBatch) -> StepRecord:
        """One optimizer step of patch-supervised single-chunk restoration."""
        cfg = self._require_stage("I")
        total = self._check_batch(cfg, batch)
        n = self.model.config.chunk_len
        up = bilinear_upscale(
            np.ascontiguousarray(batch.lq, dtype=self.model.dtype), UPSCALE
        )
        prompt = self._batch_prompt(up, first_chunk_pixels(n) // 2)
        z_lr = self._encode_pixels(up, first=True)
        lat_h, lat_w = z_lr.shape[-2:]
        window = sample_patch_window(
            lat_h, lat_w, cfg.window_h // 8, cfg.window_w // 8,
            self.vae.required_halo, make_rng(self.seed, "train-window", self.step, 0)
        )
        gt = crop_pix(np.ascontiguousarray(batch.hq, dtype=self.model.dtype), window)
        acc = {"l_mse": 0.0, "l_dists": 0.0, "l_temp": 0.0}
        self.optimizer.zero_grad()
        for start, stop in _split_rows(total, cfg.grad_accum_steps):
            draws = _PreparedDraws()
            draws.push(_sample_noise(self.seed, self.step, 0,
                                     range(start, stop), z_lr.shape[1:]))
            frac = (stop - start) / total
            with GradTape() as tape:
                ctx = ChunkContext.fresh(self.model, self._prompt_rows(prompt, start, stop))
                hr_lat, _ = self.model.generate_chunk(z_lr[start:stop], ctx, draws,
                                                      chunk_index=0)
                sr = self.vae.decode_local_t(hr_lat, window, first=True)
                gt_t = Tensor(gt[start:stop])
                fid, parts = fidelity_loss(sr, gt_t, self.weights, self.bank)
                l_temp = temporal_loss(sr, gt_t)
                loss = fid + l_temp * _const(self.weights.temp, sr.dtype)
                tape.backward(loss * _const(frac, sr.dtype))
            acc["l_mse"] += parts["l_mse"] * frac
            acc["l_dists"] += parts["l_dists"] * frac
            acc["l_temp"] += l_temp.item() * frac
        self.optimizer.step()
        rec = StepRecord(self.step, acc["l_mse"], acc["l_dists"], acc["l_temp"],
                         0.0, 0.0)
        self._check_finite(rec)
        self.step += 1
        return rec

    # -- stage II ----------------------------------------------------------------

    def stage2_step(self, batch: ClipBatch) -> StepRecord:
        """One optimizer step on a self-forced rollout.

        The rollout populates the KV cache with the model's own streaming
        forwards on LQ inputs — ground truth never enters the trajectory.
        Pixel losses supervise a sampled window per chunk; the
        distribution-matching gradient acts on each sample's chunk triplet;
        the live score then takes its own regression step on the detached
        rollouts.
        """
        cfg = self._require_stage("II")
        total = self._check_batch(cfg, batch)
        n = self.model.config.chunk_len
        rollout = cfg.rollout_chunks
        use_dmd = self.weights.dmd > 0
        if use_dmd and self.scores is None:
            raise ConfigError("stage II with distribution matching needs scores")

        up = bilinear_upscale(
            np.ascontiguousarray(batch.lq, dtype=self.model.dtype), UPSCALE
        )
        prompt = self._batch_prompt(up, first_chunk_pixels(n) // 2)
        spans = _chunk_pixel_spans(rollout, n)
        z_chunks = [self._encode_pixels(up[:, :, a:b], first=(k == 0))
                    for k, (a, b) in enumerate(spans)]
        lat_h, lat_w = z_chunks[0].shape[-2:]
        windows = [
            sample_patch_window(lat_h, lat_w, cfg.window_h // 8, cfg.window_w // 8,
                                self.vae.required_halo,
                                make_rng(self.seed, "train-window", self.step, k))
            for k in range(rollout)
        ]
        hq = np.ascontiguousarray(batch.hq, dtype=self.model.dtype)
        gt_patches = [crop_pix(hq[:, :, a:b], windows[k])
                      for k, (a, b) in enumerate(spans)]

        acc = {"l_mse": 0.0, "l_dists": 0.0, "l_temp": 0.0, "l_dmd": 0.0}
        detached = [[] for _ in range(rollout)]
        self.optimizer.zero_grad()
        for start, stop in _split_rows(total, cfg.grad_accum_steps):
            frac = (stop - start) / total
            draws = _PreparedDraws()
            for k in range(rollout):
                draws.push(_sample_noise(self.seed, self.step, k,
                                         range(start, stop), z_chunks[0].shape[1:]))
            with GradTape() as tape:
                ctx = ChunkContext.fresh(self.model, self._prompt_rows(prompt, start, stop))
                hr_lats = []
                for k in range(rollout):
                    hr_k, ctx = self.model.generate_chunk(
                        z_chunks[k][start:stop], ctx, draws, chunk_index=k
                    )
                    hr_lats.append(hr_k)
                pix = None
                for k in range(rollout):
                    sr = self.vae.decode_local_t(hr_lats[k], windows[k], first=(k == 0))
                    gt_t = Tensor(gt_patches[k][start:stop])
                    fid, parts = fidelity_loss(sr, gt_t, self.weights, self.bank)
                    l_temp = temporal_loss(sr, gt_t)
                    term = fid + l_temp * _const(self.weights.temp, sr.dtype)
                    pix = term if pix is None else pix + term
                    acc["l_mse"] += parts["l_mse"] * frac / rollout
                    acc["l_dists"] += parts["l_dists"] * frac / rollout
                    acc["l_temp"] += l_temp.item() * frac / rollout
                loss = pix * _const(frac / rollout, pix.dtype)
                if use_dmd:
                    for b in range(stop - start):
                        slices = [hr.data[b:b + 1] for hr in hr_lats]
                        g_of_b, stats = dmd_generator_gradient(
                            slices, self.scores,
                            make_rng(self.seed, "train-dmd", self.step, start + b)
                        )
                        triplet = T.concat([hr[b:b + 1] for hr in hr_lats], axis=2)
                        loss = loss + dmd_surrogate(triplet, g_of_b,
                                                    weight=self.weights.dmd / total)
                        acc["l_dmd"] += self.weights.dmd * stats["mean_abs_g"] / total
                tape.backward(loss)
            for k in range(rollout):
                detached[k].append(hr_lats[k].data)
        self.optimizer.step()

        l_fake = 0.0
        if use_dmd:
            full = [np.concatenate(parts_k, axis=0) for parts_k in detached]
            l_fake = update_fake_score(full, self.scores,
                                       make_rng(self.seed, "fake-score", self.step),
                                       self.fake_optimizer)
        rec = StepRecord(self.step, acc["l_mse"], acc["l_dists"], acc["l_temp"],
                         acc["l_dmd"], l_fake)
        self._check_finite(rec)
        self.step += 1
        return rec

    # -- loops, checkpoints -----------------------------------------------------

    def run_stage(self, cfg: StageConfig, sampler: ClipSampler,
                  scores: ScorePair | None = None) -> StageReport:
        """begin_stage + the full step loop; batches keyed by the global step."""
        self.begin_stage(cfg, sampler, scores=scores)
        step_fn = self.stage1_step if cfg.stage == "I" else self.stage2_step
        records = []
        t0 = time.perf_counter()
        for _ in range(cfg.steps):
            batch = sampler.sample(cfg, make_rng(self.seed, "train-data", self.step))
            records.append(step_fn(batch))
        return StageReport(cfg.stage, records, time.perf_counter() - t0)

    def save_checkpoint(self, dirpath) -> None:
        tensors = {f"model.{n}": t.data for n, t in self.model.named_params()}
        tensors.update({f"vae.{n}": t.data for n, t in self.vae.named_params()})
        if self.optimizer is not None:
            tensors.update(self.optimizer.state_tensors("opt_g."))
        if self.scores is not None:
            tensors.update({f"real.{n}": a for n, a in self.scores.real.state_dict().items()})
            tensors.update({f"fake.{n}": a for n, a in self.scores.fake.state_dict().items()})
            if self.fake_optimizer is not None:
                tensors.update(self.fake_optimizer.state_tensors("opt_f."))
        meta = {
            "step": self.step,
            "seed": self.seed,
            "stage": self.cfg.stage if self.cfg else None,
            "score_width": self.score_width,
            "weights": asdict(self.weights),
            "stage_config": asdict(self.cfg) if self.cfg else None,
            "model_config": asdict(self.model.config),
            "vae_config": asdict(self.vae.config),
        }
        tnsr.save_manifest(dirpath, tensors, meta)

    def load_checkpoint(self, dirpath) -> dict:
        """Restore generator and VAE parameters, scores if present, and the step counter."""
        tensors, meta = tnsr.load_manifest(dirpath)
        model_state = {k[len("model."):]: v for k, v in tensors.items()
                       if k.startswith("model.")}
        self.model.load_state_dict(model_state)
        vae_state = {k[len("vae."):]: v for k, v in tensors.items()
                     if k.startswith("vae.")}
        if vae_state:
            self.vae.load_state_dict(vae_state)
        real_state = {k[len("real."):]: v for k, v in tensors.items()
                      if k.startswith("real.")}
        if real_state:
            channels = self.model.config.latent_channels
            width = int(meta.get("score_width", self.score_width))
            init_seed = 1000 + int(meta.get("seed", self.seed))
            real = ScoreNet(channels, width=width, init_seed=init_seed,
                            dtype=self.model.dtype)
            real.load_state_dict(real_state)
            real.freeze()
            fake = ScoreNet(channels, width=width, init_seed=init_seed,
                            dtype=self.model.dtype)
            fake.load_state_dict({k[len("fake."):]: v for k, v in tensors.items()
                                  if k.startswith("fake.")})
            self.scores = ScorePair(real=real, fake=fake)
        self.step = int(meta["step"])
        return meta


# --------------------------------------------------------------------------
# the curriculum
# --------------------------------------------------------------------------

def run_curriculum(trainer: Trainer, sampler: ClipSampler,
                   stage1: StageConfig, stage2: StageConfig, out_dir,
                   resume: bool = False) -> dict:
    """Stage I then Stage II, with checkpoints, loss CSV, curve figure, summary.

    ``resume`` skips any stage whose checkpoint already exists and continues
    with the restored parameters and step counter; random streams are keyed
    by the global step, so a resumed run reproduces an uninterrupted one.
    A non-finite loss dumps a diagnostic checkpoint plus the partial records
    before re-raising.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ck1, ck2 = out / "stage1.ckpt", out / "stage2.ckpt"
    csv_path, fig_path = out / "train_losses.csv", out / "train_losses.png"
    summary_path = out / "train_summary.json"

    rows: list[list] = []
    if resume and csv_path.exists():
        _, old = report_mod.read_csv(csv_path)
        rows = [list(r) for r in old]

    def _flush(stages: list[StageReport]) -> dict:
        report_mod.write_csv(csv_path, LOSS_HEADER, rows)
        if rows:
            report_mod.save_loss_curves(fig_path, LOSS_HEADER, rows)
        summary = {
            "seed": trainer.seed,
            "weights": asdict(trainer.weights),
            "stages": [s.summary() for s in stages],
            "checkpoints": {"stage1": str(ck1), "stage2": str(ck2)},
        }
        with open(summary_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        return summary

    stages: list[StageReport] = []
    try:
        if resume and (ck1 / "manifest.json").exists():
            trainer.load_checkpoint(ck1)
        else:
            rep1 = trainer.run_stage(stage1, sampler)
            trainer.save_checkpoint(ck1)
            rep1.checkpoint = str(ck1)
            stages.append(rep1)
            rows.extend(r.row() for r in rep1.records)
        if resume and (ck2 / "manifest.json").exists():
            trainer.load_checkpoint(ck2)
        else:
            rep2 = trainer.run_stage(stage2, sampler)
            trainer.save_checkpoint(ck2)
            rep2.checkpoint = str(ck2)
            stages.append(rep2)
            rows.extend(r.row() for r in rep2.records)
    except NonFiniteError:
        trainer.save_checkpoint(out / "diagnostic.ckpt")
        _flush(stages)
        raise
    return _flush(stages)
