"""One-step chunked generator: block-causal DiT with a rolling KV-cache.

A chunk is N latent frames. Within a chunk attention is full; across chunks
it is causal, served either by streaming (``generate_chunk`` + ChunkContext)
or by a single masked pass over the whole sequence (``forward_full``, the
equivalence oracle). Temporal position is encoded with rotary embeddings on
absolute latent-frame indices; spatial position with a learned 2-D table.
The visual prompt enters through zero-gated cross-attention, so an empty
prompt makes those blocks exact identities.

The generator is one-step: a chunk costs exactly one forward pass, counted on
the model so pipelines can assert forwards == chunks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, ShapeMismatchError
from .guidance import PromptEmbedding
from .nn import LayerNorm, Linear, Module, normal_param, zeros_param
from .rng import make_rng
from .tensor import Tensor


@dataclass
class DiTConfig:
    layers: int = 4
    heads: int = 4
    model_dim: int = 128
    chunk_len: int = 3              # N: latent frames per chunk
    cache_len: int | None = 3       # M: latent frames retained; None = unbounded
    fixed_timestep: float = 0.25    # t*: noise level of the one-step mapping
    patch_size: int = 2
    latent_channels: int = 8
    mlp_ratio: float = 4.0
    max_grid: int = 16              # learned spatial table covers up to this many patches
    cache_rotated_keys: bool = True # cache keys after rotary application
    init_seed: int = 200

    def validate(self) -> "DiTConfig":
        if self.chunk_len < 1:
            raise ConfigError("chunk_len must be >= 1")
        if self.cache_len is not None and self.cache_len < 0:
            raise ConfigError("cache_len must be >= 0 (or None for unbounded)")
        if self.model_dim % self.heads:
            raise ConfigError("model_dim must divide evenly into heads")
        if (self.model_dim // self.heads) % 2:
            raise ConfigError("head dim must be even for rotary embedding")
        if not (0.0 < self.fixed_timestep < 1.0):
            raise ConfigError("fixed_timestep must lie in (0, 1)")
        return self


def noise_schedule(t: float) -> tuple[float, float]:
    """Cosine schedule: x_t = alpha * x0 + sigma * eps."""
    return math.cos(0.5 * math.pi * t), math.sin(0.5 * math.pi * t)


def _rope_tables(positions: np.ndarray, dim: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables (len(positions), dim) for half-split rotation."""
    half = dim // 2
    freqs = 10000.0 ** (-np.arange(half, dtype=np.float64) / half)
    ang = np.asarray(positions, dtype=np.float64)[:, None] * freqs[None, :]
    ang = np.concatenate([ang, ang], axis=-1)
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


def _rotate_half(x: Tensor) -> Tensor:
    half = x.shape[-1] // 2
    return T.concat([-x[..., half:], x[..., :half]], axis=-1)


def _apply_rope(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    # x: (B, H, S, dh); tables: (S, dh)
    c = Tensor(cos[None, None])
    s = Tensor(sin[None, None])
    return x * c + _rotate_half(x) * s


@dataclass
class LayerCache:
    k: Tensor | None = None  # (B, H, S_cache, dh); rotated iff cache_rotated_keys
    v: Tensor | None = None

    @property
    def tokens(self) -> int:
        return 0 if self.k is None else self.k.shape[2]

    @property
    def elements(self) -> int:
        return 0 if self.k is None else self.k.size + self.v.size


@dataclass
class ChunkContext:
    """Autoregressive state: per-layer KV blocks plus the shared prompt."""

    layers: list[LayerCache]
    prompt: PromptEmbedding | None = None
    cached_positions: list[int] = field(default_factory=list)  # absolute latent frames
    next_chunk_index: int = 0
    frames_seen: int = 0

    @classmethod
    def fresh(cls, model: "GeneratorModel", prompt: PromptEmbedding | None) -> "ChunkContext":
        return cls(layers=[LayerCache() for _ in range(model.config.layers)], prompt=prompt)

    def cache_elements(self) -> int:
        return sum(layer.elements for layer in self.layers)

    def validate(self) -> None:
        pos = self.cached_positions
        if any(b - a != 1 for a, b in zip(pos, pos[1:])):
            raise DataError(f"cache positions not contiguous/increasing: {pos}")
        if pos and pos[-1] != self.frames_seen - 1:
            raise DataError("cache positions out of sync with frames_seen")


def rolling_update(
    ctx: ChunkContext,
    new_k: list[Tensor],
    new_v: list[Tensor],
    new_positions: list[int],
    cache_len: int | None,
    tokens_per_frame: int,
) -> ChunkContext:
    """Append the chunk's KV, then FIFO-evict down to ``cache_len`` frames.

    Entering chunk k the cache therefore holds the last M latent frames that
    precede it (with N=M=3: the chunk covering frames 12-14 attends to 9-11).
    """
    positions = list(ctx.cached_positions) + list(new_positions)
    keep_frames = len(positions) if cache_len is None else min(cache_len, len(positions))
    keep_tokens = keep_frames * tokens_per_frame
    layers = []
    for cache, k, v in zip(ctx.layers, new_k, new_v):
        full_k = k if cache.k is None else T.concat([cache.k, k], axis=2)
        full_v = v if cache.v is None else T.concat([cache.v, v], axis=2)
        if keep_tokens == 0:
            layers.append(LayerCache())
        else:
            layers.append(LayerCache(k=full_k[:, :, -keep_tokens:], v=full_v[:, :, -keep_tokens:]))
    out = ChunkContext(
        layers=layers,
        prompt=ctx.prompt,
        cached_positions=positions[-keep_frames:] if keep_frames else [],
        next_chunk_index=ctx.next_chunk_index + 1,
        frames_seen=ctx.frames_seen + len(new_positions),
    )
    out.validate()
    return out


class DiTBlock(Module):
    def __init__(self, rng, cfg: DiTConfig, dtype):
        dm = cfg.model_dim
        self.ln_attn = LayerNorm(dm, dtype)
        self.wq = Linear(rng, dm, dm, dtype)
        self.wk = Linear(rng, dm, dm, dtype)
        self.wv = Linear(rng, dm, dm, dtype)
        self.wo = Linear(rng, dm, dm, dtype, out_scale=1.0 / math.sqrt(2 * cfg.layers))
        self.ln_cross = LayerNorm(dm, dtype)
        self.cq = Linear(rng, dm, dm, dtype)
        self.ck = Linear(rng, dm, dm, dtype)
        self.cv = Linear(rng, dm, dm, dtype)
        self.co = Linear(rng, dm, dm, dtype)
        self.cross_gate = zeros_param((dm,), dtype)
        self.ln_mlp = LayerNorm(dm, dtype)
        self.fc1 = Linear(rng, dm, int(dm * cfg.mlp_ratio), dtype)
        self.fc2 = Linear(rng, int(dm * cfg.mlp_ratio), dm, dtype, out_scale=1.0 / math.sqrt(2 * cfg.layers))
        self._heads = cfg.heads
        self._dh = dm // cfg.heads
        self._rotate_cache = cfg.cache_rotated_keys

    # -- attention plumbing ---------------------------------------------
    def _split_heads(self, x: Tensor) -> Tensor:
        b, s, _ = x.shape
        return T.transpose(T.reshape(x, (b, s, self._heads, self._dh)), (0, 2, 1, 3))

    def _merge_heads(self, x: Tensor) -> Tensor:
        b, h, s, dh = x.shape
        return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, s, h * dh))

    def _attend(self, q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None) -> Tensor:
        scale = Tensor(np.asarray(self._dh**-0.5, dtype=q.dtype))
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * scale
        att = T.softmax(scores, axis=-1, mask=mask)
        return T.matmul(att, v)

    def self_attention_streaming(
        self,
        x: Tensor,
        cache: LayerCache,
        positions: np.ndarray,
        cache_positions: np.ndarray,
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Attend over [cache || current]; returns (out, cache_k, cache_v)."""
        h = self.ln_attn(x)
        q = self._split_heads(self.wq(h))
        k = self._split_heads(self.wk(h))
        v = self._split_heads(self.wv(h))
        cos, sin = _rope_tables(positions, self._dh, x.dtype)
        q = _apply_rope(q, cos, sin)
        k_rot = _apply_rope(k, cos, sin)
        if cache.k is None:
            full_k, full_v = k_rot, v
        else:
            cached_k = cache.k
            if not self._rotate_cache:
                ccos, csin = _rope_tables(cache_positions, self._dh, x.dtype)
                cached_k = _apply_rope(cached_k, ccos, csin)
            full_k = T.concat([cached_k, k_rot], axis=2)
            full_v = T.concat([cache.v, v], axis=2)
        out = self._attend(q, full_k, full_v, mask=None)
        new_k = k_rot if self._rotate_cache else k
        return self.wo(self._merge_heads(out)), new_k, v

    def self_attention_full(self, x: Tensor, positions: np.ndarray, mask: np.ndarray) -> Tensor:
        h = self.ln_attn(x)
        q = self._split_heads(self.wq(h))
        k = self._split_heads(self.wk(h))
        v = self._split_heads(self.wv(h))
        cos, sin = _rope_tables(positions, self._dh, x.dtype)
        q = _apply_rope(q, cos, sin)
        k = _apply_rope(k, cos, sin)
        out = self._attend(q, k, v, mask=mask)
        return self.wo(self._merge_heads(out))

    def cross_attention(self, x: Tensor, prompt_tokens: Tensor) -> Tensor:
        h = self.ln_cross(x)
        q = self._split_heads(self.cq(h))
        k = self._split_heads(self.ck(prompt_tokens))
        v = self._split_heads(self.cv(prompt_tokens))
        out = self.co(self._merge_heads(self._attend(q, k, v, mask=None)))
        return out * self.cross_gate

    def mlp(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(self.ln_mlp(x))))

    def run_body(self, x: Tensor, att: Tensor, prompt_tokens: Tensor | None) -> Tensor:
        """Residual wiring shared by the streaming and full paths."""
        x = x + att
        if prompt_tokens is not None:
            x = x + self.cross_attention(x, prompt_tokens)
        return x + self.mlp(x)


class GeneratorModel(Module):
    """G: (LR-upscale latent chunk + fixed noise level, context) -> HR latent chunk."""

    def __init__(self, config: DiTConfig | None = None, dtype=np.float32):
        cfg = (config or DiTConfig()).validate()
        self.config = cfg
        self.dtype = np.dtype(dtype)
        rng = make_rng(cfg.init_seed, "dit-init")
        token_dim = cfg.latent_channels * cfg.patch_size**2
        self.embed = Linear(rng, token_dim, cfg.model_dim, dtype)
        self.spatial_pos = normal_param(rng, (cfg.max_grid, cfg.max_grid, cfg.model_dim), 0.02, dtype)
        self.blocks = [DiTBlock(rng, cfg, dtype) for _ in range(cfg.layers)]
        self.ln_out = LayerNorm(cfg.model_dim, dtype)
        self.head = Linear(rng, cfg.model_dim, token_dim, dtype, out_scale=0.1)
        self.forward_count = 0  # generator forwards; pipelines assert == chunk count

    # -- tokenization -----------------------------------------------------
    def _grid(self, h: int, w: int) -> tuple[int, int]:
        p = self.config.patch_size
        if h % p or w % p:
            raise ShapeMismatchError(f"latent {h}x{w} not divisible by patch {p}")
        gh, gw = h // p, w // p
        if gh > self.config.max_grid or gw > self.config.max_grid:
            raise ConfigError(f"latent grid {gh}x{gw} exceeds max_grid {self.config.max_grid}")
        return gh, gw

    def patchify(self, z: Tensor) -> Tensor:
        """(B,C,F,h,w) -> (B, F*gh*gw, C*p*p), frame-major token order."""
        b, c, f, h, w = z.shape
        p = self.config.patch_size
        gh, gw = self._grid(h, w)
        z = T.reshape(z, (b, c, f, gh, p, gw, p))
        z = T.transpose(z, (0, 2, 3, 5, 1, 4, 6))  # B, F, gh, gw, C, p, p
        return T.reshape(z, (b, f * gh * gw, c * p * p))

    def unpatchify(self, tokens: Tensor, f: int, h: int, w: int) -> Tensor:
        b = tokens.shape[0]
        c = self.config.latent_channels
        p = self.config.patch_size
        gh, gw = h // p, w // p
        z = T.reshape(tokens, (b, f, gh, gw, c, p, p))
        z = T.transpose(z, (0, 4, 1, 2, 5, 3, 6))  # B, C, F, gh, p, gw, p
        return T.reshape(z, (b, c, f, h, w))

    def _embed_tokens(self, z: Tensor) -> Tensor:
        b, c, f, h, w = z.shape
        gh, gw = self._grid(h, w)
        x = self.embed(self.patchify(z))
        pos = T.reshape(self.spatial_pos[:gh, :gw], (1, gh * gw, self.config.model_dim))
        pos_seq = T.concat([pos] * f, axis=1) if f > 1 else pos
        return x + pos_seq

    def _prompt_tensor(self, prompt: PromptEmbedding, batch: int) -> Tensor | None:
        if prompt.token_count == 0:
            return None
        tok = prompt.tokens
        if not isinstance(tok, Tensor):
            tok = Tensor(np.asarray(tok, dtype=self.dtype))
        if tok.ndim == 2:
            tok = T.reshape(tok, (1,) + tok.shape)
        if tok.shape[0] != batch:
            if tok.shape[0] != 1:
                raise ShapeMismatchError("prompt batch mismatch")
            tok = T.concat([tok] * batch, axis=0)
        if tok.shape[-1] != self.config.model_dim:
            raise ShapeMismatchError(
                f"prompt dim {tok.shape[-1]} != model_dim {self.config.model_dim}"
            )
        return tok

    def _noised_input(self, lr_chunk_latent: Tensor, rng: np.random.Generator) -> Tensor:
        alpha, sigma = noise_schedule(self.config.fixed_timestep)
        eps = rng.standard_normal(lr_chunk_latent.shape).astype(self.dtype)
        return lr_chunk_latent * Tensor(np.asarray(alpha, self.dtype)) + Tensor(eps * sigma)

    # -- streaming path ----------------------------------------------------
    def generate_chunk(
        self,
        lr_chunk_latent: Tensor,
        ctx: ChunkContext,
        rng: np.random.Generator,
        chunk_index: int | None = None,
    ) -> tuple[Tensor, ChunkContext]:
        """One-step generation of the next chunk; returns (hr_latent, new context)."""
        cfg = self.config
        if not isinstance(lr_chunk_latent, Tensor):
            lr_chunk_latent = Tensor(np.asarray(lr_chunk_latent, dtype=self.dtype))
        b, c, f, h, w = lr_chunk_latent.shape
        if f != cfg.chunk_len:
            raise DataError(f"chunk must have {cfg.chunk_len} latent frames, got {f}")
        if c != cfg.latent_channels:
            raise ShapeMismatchError(f"expected {cfg.latent_channels} latent channels, got {c}")
        if chunk_index is not None and chunk_index != ctx.next_chunk_index:
            raise DataError(f"context expects chunk {ctx.next_chunk_index}, got {chunk_index}")
        if ctx.prompt is None:
            raise DataError("context has no prompt; use an empty prompt for 'none' mode")

        z_in = self._noised_input(lr_chunk_latent, rng)
        frame_positions = ctx.frames_seen + np.arange(f)
        tokens_per_frame = (h // cfg.patch_size) * (w // cfg.patch_size)
        token_pos = np.repeat(frame_positions, tokens_per_frame)
        cache_token_pos = np.repeat(np.asarray(ctx.cached_positions, dtype=np.int64), tokens_per_frame)

        x = self._embed_tokens(z_in)
        prompt_tokens = self._prompt_tensor(ctx.prompt, b)
        new_ks: list[Tensor] = []
        new_vs: list[Tensor] = []
        for block, cache in zip(self.blocks, ctx.layers):
            att, nk, nv = block.self_attention_streaming(x, cache, token_pos, cache_token_pos)
            new_ks.append(nk)
            new_vs.append(nv)
            x = block.run_body(x, att, prompt_tokens)
        hr = self.unpatchify(self.head(self.ln_out(x)), f, h, w)
        self.forward_count += 1
        new_ctx = rolling_update(
            ctx, new_ks, new_vs, list(frame_positions), cfg.cache_len, tokens_per_frame
        )
        return hr, new_ctx

    # -- oracle path ---------------------------------------------------------
    def forward_full(
        self,
        lr_latent_seq: Tensor,
        prompt: PromptEmbedding,
        seed: int,
    ) -> Tensor:
        """Process all chunks at once under a block-causal mask (M = unbounded).

        Noise per chunk is drawn from the same substreams as the streaming
        path (``chunk_noise_rng(seed, k)``), so with cache_len=None the two
        paths agree up to summation-order effects.
        """
        cfg = self.config
        if not isinstance(lr_latent_seq, Tensor):
            lr_latent_seq = Tensor(np.asarray(lr_latent_seq, dtype=self.dtype))
        b, c, f, h, w = lr_latent_seq.shape
        if f % cfg.chunk_len:
            raise DataError(f"sequence of {f} latent frames is not whole chunks of {cfg.chunk_len}")
        n_chunks = f // cfg.chunk_len
        noised = [
            self._noised_input(
                lr_latent_seq[:, :, k * cfg.chunk_len : (k + 1) * cfg.chunk_len],
                chunk_noise_rng(seed, k),
            )
            for k in range(n_chunks)
        ]
        z_in = T.concat(noised, axis=2)

        tokens_per_frame = (h // cfg.patch_size) * (w // cfg.patch_size)
        token_pos = np.repeat(np.arange(f, dtype=np.int64), tokens_per_frame)
        token_chunk = token_pos // cfg.chunk_len
        mask = token_chunk[None, :] <= token_chunk[:, None]  # query row attends key col

        x = self._embed_tokens(z_in)
        prompt_tokens = self._prompt_tensor(prompt, b)
        for block in self.blocks:
            att = block.self_attention_full(x, token_pos, mask)
            x = block.run_body(x, att, prompt_tokens)
        hr = self.unpatchify(self.head(self.ln_out(x)), f, h, w)
        self.forward_count += n_chunks
        return hr


def chunk_noise_rng(seed: int, chunk_index: int) -> np.random.Generator:
    """Noise substream for chunk k; shared by streaming and full paths."""
    return make_rng(seed, "chunk-noise", chunk_index)


def stream_chunks(
    model: GeneratorModel,
    lr_latent_seq: Tensor | np.ndarray,
    prompt: PromptEmbedding,
    seed: int,
) -> tuple[np.ndarray, ChunkContext]:
    """Run the streaming path over a whole latent sequence; returns HR latents."""
    cfg = model.config
    data = lr_latent_seq.data if isinstance(lr_latent_seq, Tensor) else np.asarray(lr_latent_seq)
    f = data.shape[2]
    if f % cfg.chunk_len:
        raise DataError(f"sequence of {f} latent frames is not whole chunks of {cfg.chunk_len}")
    ctx = ChunkContext.fresh(model, prompt)
    outs = []
    for k in range(f // cfg.chunk_len):
        chunk = Tensor(np.ascontiguousarray(data[:, :, k * cfg.chunk_len : (k + 1) * cfg.chunk_len]))
        hr, ctx = model.generate_chunk(chunk, ctx, chunk_noise_rng(seed, k), chunk_index=k)
        outs.append(hr.data)
    return np.concatenate(outs, axis=2), ctx
