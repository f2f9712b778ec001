"""Training objectives: patch fidelity, temporal coherence, score distillation.

Reconstruction is supervised on small pixel patches whose positions are drawn
in latent coordinates, decoded locally with enough halo to be exactly equal
to the corresponding crop of a full decode — so patch training sees the same
pixels full-frame inference would produce.

Distribution matching uses a pair of denoising score networks (a frozen one
for the target distribution, a live one tracking the generator). The
generator gradient is the normalized difference of their denoised estimates
on noised triplets of adjacent chunks, injected into the autodiff graph via a
linear surrogate whose gradient is exactly that difference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .clips import CropWindow
from .dit import noise_schedule
from .errors import ConfigError, DataError
from .nn import Conv3d, Linear, Module
from .rng import make_rng
from .tensor import Tensor, pause_recording


@dataclass
class LossWeights:
    mse: float = 1.0
    dists: float = 0.5
    temp: float = 1.0
    dmd: float = 1.0

    def validate(self) -> "LossWeights":
        for name in ("mse", "dists", "temp", "dmd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")
        return self


# --------------------------------------------------------------------------
# patch windows
# --------------------------------------------------------------------------

def sample_patch_window(
    latent_h: int,
    latent_w: int,
    crop_h: int,
    crop_w: int,
    halo: int,
    rng: np.random.Generator,
) -> CropWindow:
    """Uniformly place a latent crop; the halo clamps at clip borders."""
    if crop_h > latent_h or crop_w > latent_w or crop_h < 1 or crop_w < 1:
        raise ConfigError(
            f"crop {crop_h}x{crop_w} cannot fit in latent {latent_h}x{latent_w}"
        )
    i = int(rng.integers(0, latent_h - crop_h + 1))
    j = int(rng.integers(0, latent_w - crop_w + 1))
    return CropWindow(i=i, j=j, h_c=crop_h, w_c=crop_w, halo=halo)


# --------------------------------------------------------------------------
# pixel-space objectives
# --------------------------------------------------------------------------

class PerceptualBank(Module):
    """Fixed random conv pyramid for a structure/texture feature distance.

    Weights are drawn once from a seeded stream and frozen; the distance is
    therefore a deterministic, differentiable function of its two inputs.
    """

    def __init__(self, widths: tuple[int, ...] = (8, 16), init_seed: int = 400, dtype=np.float32):
        rng = make_rng(init_seed, "perceptual-bank")
        self.stages = []
        c_in = 3
        for width in widths:
            self.stages.append(
                Conv3d(rng, c_in, width, (1, 3, 3), stride=(1, 2, 2), padding=(0, 1, 1), dtype=dtype)
            )
            c_in = width
        self.freeze()

    def features(self, x: Tensor) -> list[Tensor]:
        feats = [x]
        for conv in self.stages:
            x = T.gelu(conv(x))
            feats.append(x)
        return feats


def _stage_similarity(a: Tensor, b: Tensor, eps: float = 1e-6) -> Tensor:
    axes = (2, 3, 4)  # over time and space, per (batch, channel)
    mu_a = T.mean(a, axis=axes, keepdims=True)
    mu_b = T.mean(b, axis=axes, keepdims=True)
    var_a = T.mean(T.square(a - mu_a), axis=axes, keepdims=True)
    var_b = T.mean(T.square(b - mu_b), axis=axes, keepdims=True)
    cov = T.mean((a - mu_a) * (b - mu_b), axis=axes, keepdims=True)
    e = Tensor(np.asarray(eps, a.dtype))
    two = Tensor(np.asarray(2.0, a.dtype))
    mean_sim = (two * mu_a * mu_b + e) / (T.square(mu_a) + T.square(mu_b) + e)
    struct_sim = (two * cov + e) / (var_a + var_b + e)
    half = Tensor(np.asarray(0.5, a.dtype))
    return T.mean(half * (mean_sim + struct_sim))


def perceptual_distance(sr: Tensor, gt: Tensor, bank: PerceptualBank) -> Tensor:
    """1 - mean structure/texture similarity across feature stages; 0 iff equal."""
    if sr.shape != gt.shape:
        raise DataError(f"perceptual distance needs matching shapes: {sr.shape} vs {gt.shape}")
    feats_a = bank.features(sr)
    feats_b = bank.features(gt)
    sims = [_stage_similarity(a, b) for a, b in zip(feats_a, feats_b)]
    total = sims[0]
    for s in sims[1:]:
        total = total + s
    one = Tensor(np.asarray(1.0, sr.dtype))
    return one - total * Tensor(np.asarray(1.0 / len(sims), sr.dtype))


def fidelity_loss(
    sr: Tensor,
    gt: Tensor,
    weights: LossWeights,
    bank: PerceptualBank,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted pixel MSE + perceptual distance on matching patches."""
    if sr.shape != gt.shape:
        raise DataError(f"fidelity loss needs matching shapes: {sr.shape} vs {gt.shape}")
    mse = T.mean(T.square(sr - gt))
    dists = perceptual_distance(sr, gt, bank)
    loss = mse * Tensor(np.asarray(weights.mse, sr.dtype)) + dists * Tensor(
        np.asarray(weights.dists, sr.dtype)
    )
    return loss, {"l_mse": mse.item(), "l_dists": dists.item()}


def temporal_loss(sr: Tensor, gt: Tensor) -> Tensor:
    """Sum over adjacent-frame pairs of the mean squared difference between
    the output's frame-to-frame change and the reference's.

    A single frame offset by +0.1 against an otherwise identical static pair
    of sequences contributes exactly 2 * 0.01 = 0.02.
    """
    if sr.shape != gt.shape:
        raise DataError(f"temporal loss needs matching shapes: {sr.shape} vs {gt.shape}")
    t_axis = sr.ndim - 4 + 1  # (..., C, T, H, W) -> time axis
    frames = sr.shape[t_axis]
    if frames < 2:
        return T.mean(T.square(sr - sr))  # zero of the right dtype, still on tape
    total = None
    for t in range(frames - 1):
        sl_next = [slice(None)] * sr.ndim
        sl_prev = [slice(None)] * sr.ndim
        sl_next[t_axis] = slice(t + 1, t + 2)
        sl_prev[t_axis] = slice(t, t + 1)
        d_sr = sr[tuple(sl_next)] - sr[tuple(sl_prev)]
        d_gt = gt[tuple(sl_next)] - gt[tuple(sl_prev)]
        term = T.mean(T.square(d_sr - d_gt))
        total = term if total is None else total + term
    return total


# --------------------------------------------------------------------------
# score networks and distribution matching
# --------------------------------------------------------------------------

class ScoreNet(Module):
    """Small conv denoiser: predicts x0 from (x_t, t) with FiLM conditioning."""

    TEMB_DIM = 32

    def __init__(self, channels: int, width: int = 32, init_seed: int = 500, dtype=np.float32):
        rng = make_rng(init_seed, "score-init")
        self.dtype = np.dtype(dtype)
        self.channels = channels
        self.t_proj = Linear(rng, self.TEMB_DIM, 64, dtype)
        self.film1 = Linear(rng, 64, 2 * width, dtype, out_scale=0.1)
        self.film2 = Linear(rng, 64, 2 * width, dtype, out_scale=0.1)
        self.conv_in = Conv3d(rng, channels, width, (3, 3, 3), padding=(1, 1, 1), dtype=dtype)
        self.conv_mid = Conv3d(rng, width, width, (3, 3, 3), padding=(1, 1, 1), dtype=dtype)
        self.conv_out = Conv3d(rng, width, channels, (3, 3, 3), padding=(1, 1, 1), dtype=dtype)
        self._width = width

    def _film(self, h: Tensor, proj: Linear, temb: Tensor) -> Tensor:
        sc_sh = proj(temb)  # (1, 2w)
        w = self._width
        scale = T.reshape(sc_sh[:, :w], (1, w, 1, 1, 1))
        shift = T.reshape(sc_sh[:, w:], (1, w, 1, 1, 1))
        one = Tensor(np.asarray(1.0, h.dtype))
        return h * (one + scale) + shift

    def __call__(self, x_t: Tensor, t: float) -> Tensor:
        from .nn import sinusoidal_embedding

        temb = Tensor(sinusoidal_embedding(np.asarray([t]), self.TEMB_DIM).astype(self.dtype))
        temb = T.gelu(self.t_proj(temb))
        h = T.gelu(self.conv_in(x_t))
        h = self._film(h, self.film1, temb)
        h = T.gelu(self.conv_mid(h))
        h = self._film(h, self.film2, temb)
        return self.conv_out(h) + x_t  # residual: identity start near t=0

    def predict_x0(self, x_t: np.ndarray, t: float) -> np.ndarray:
        """Numpy-in/numpy-out evaluation that never records on an active tape."""
        with pause_recording():
            return self(Tensor(np.asarray(x_t, dtype=self.dtype)), t).data


class AnalyticGaussianScore:
    """Exact denoiser for a 1-D Gaussian N(mean, std^2): E[x0 | x_t]."""

    def __init__(self, mean: float, std: float):
        self.mean = float(mean)
        self.std = float(std)

    def predict_x0(self, x_t: np.ndarray, t: float) -> np.ndarray:
        alpha, sigma = noise_schedule(t)
        s2 = self.std**2
        gain = alpha * s2 / (alpha**2 * s2 + sigma**2)
        return self.mean + gain * (np.asarray(x_t) - alpha * self.mean)


@dataclass
class ScorePair:
    """Frozen target-distribution denoiser + live generator-distribution denoiser."""

    real: object
    fake: object
    t_lo: float = 0.1
    t_hi: float = 0.9

    def validate(self) -> "ScorePair":
        if not (0.0 <= self.t_lo < self.t_hi <= 1.0):
            raise ConfigError("score timestep range must satisfy 0 <= t_lo < t_hi <= 1")
        return self

    def sample_t(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.t_lo, self.t_hi))


def _concat_triplet(chunk_latents) -> np.ndarray:
    if len(chunk_latents) != 3:
        raise DataError(f"distribution matching needs exactly 3 adjacent chunks, got {len(chunk_latents)}")
    arrs = [np.asarray(c.data if isinstance(c, Tensor) else c) for c in chunk_latents]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise DataError("triplet chunks must share a shape")
    return np.concatenate(arrs, axis=2)


def dmd_generator_gradient(
    chunk_latents,
    scores: ScorePair,
    rng: np.random.Generator,
) -> tuple[np.ndarray, dict[str, float]]:
    """Distribution-matching gradient on a noised triplet of adjacent chunks.

    g = (fake_x0 - real_x0) / (mean |x - real_x0| + 1e-8), the normalizer
    taken per sample. Identical real and fake denoisers give exactly zero.
    """
    x = _concat_triplet(chunk_latents)
    t = scores.sample_t(rng)
    alpha, sigma = noise_schedule(t)
    eps = rng.standard_normal(x.shape).astype(x.dtype)
    x_t = alpha * x + sigma * eps
    mu_real = scores.real.predict_x0(x_t, t)
    mu_fake = scores.fake.predict_x0(x_t, t)
    reduce_axes = tuple(range(1, x.ndim))
    norm = np.mean(np.abs(x - mu_real), axis=reduce_axes, keepdims=True) + 1e-8
    g = (mu_fake - mu_real) / norm
    return g, {"t": t, "mean_abs_g": float(np.mean(np.abs(g)))}


def dmd_surrogate(triplet: Tensor, g: np.ndarray, weight: float = 1.0) -> Tensor:
    """Tape-side term whose gradient w.r.t. ``triplet`` is exactly ``weight * g``."""
    if triplet.shape != g.shape:
        raise DataError(f"surrogate gradient shape {g.shape} != triplet {triplet.shape}")
    return T.sum_(triplet * Tensor((weight * g).astype(triplet.dtype)))


def update_fake_score(
    chunk_latents,
    scores: ScorePair,
    rng: np.random.Generator,
    optimizer,
) -> float:
    """One denoising-regression step of the live score on generator samples."""
    from .tensor import GradTape

    x = _concat_triplet(chunk_latents)
    t = scores.sample_t(rng)
    alpha, sigma = noise_schedule(t)
    eps = rng.standard_normal(x.shape).astype(x.dtype)
    x_t = alpha * x + sigma * eps
    optimizer.zero_grad()
    with GradTape() as tape:
        pred = scores.fake(Tensor(np.asarray(x_t, dtype=scores.fake.dtype)), t)
        loss = T.mean(T.square(pred - Tensor(np.asarray(x, dtype=scores.fake.dtype))))
        tape.backward(loss)
    optimizer.step()
    return loss.item()
