"""Visual prompts: compact token summaries of key frames.

A prompt is a small grid of pooled feature tokens extracted from one or more
key frames of the upscaled LR video. The generator attends to these tokens
through gated cross-attention, giving every chunk access to the same global
appearance summary. Sharing one prompt across all chunks ("joint" policy)
keeps the description consistent over time; per-chunk prompts and empty
prompts exist as ablation policies.

The encoder counts its own invocations so pipelines can assert how many
times a policy actually ran it (joint = once per video).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError
from .nn import Conv3d, Linear, Module
from .rng import make_rng
from .tensor import Tensor

PROMPT_POLICIES = ("joint", "separate", "none")


@dataclass
class PromptEmbedding:
    """Token grid (P, model_dim) plus the pixel-frame indices it came from."""

    tokens: Tensor | np.ndarray
    source_frame_indices: list[int] = field(default_factory=list)

    @property
    def token_count(self) -> int:
        return 0 if self.tokens is None else self.tokens.shape[-2]

    def detached(self) -> "PromptEmbedding":
        tok = self.tokens.data if isinstance(self.tokens, Tensor) else self.tokens
        return PromptEmbedding(np.array(tok), list(self.source_frame_indices))


def empty_prompt(model_dim: int) -> PromptEmbedding:
    """The 'none' policy: zero tokens; cross-attention is skipped entirely."""
    return PromptEmbedding(tokens=np.zeros((0, model_dim), dtype=np.float32))


@dataclass
class PromptEncoderConfig:
    widths: tuple[int, ...] = (16, 24, 32, 48)
    grid: int = 4                 # tokens form a grid x grid summary (P = grid^2)
    model_dim: int = 128
    init_seed: int = 300

    def validate(self) -> "PromptEncoderConfig":
        if self.grid < 1:
            raise ConfigError("prompt grid must be >= 1")
        if len(self.widths) < 1:
            raise ConfigError("prompt encoder needs at least one conv stage")
        return self

    @property
    def token_count(self) -> int:
        return self.grid * self.grid


class PromptEncoder(Module):
    """Strided conv pyramid -> adaptive mean pool -> linear, per key frame."""

    def __init__(self, config: PromptEncoderConfig | None = None, dtype=np.float32):
        cfg = (config or PromptEncoderConfig()).validate()
        self.config = cfg
        self.dtype = np.dtype(dtype)
        rng = make_rng(cfg.init_seed, "prompt-init")
        self.stages = []
        c_in = 3
        for width in cfg.widths:
            conv = Conv3d(rng, c_in, width, (1, 3, 3), stride=(1, 2, 2), padding=(0, 1, 1), dtype=dtype)
            # non-zero bias init so constant inputs (e.g. black) map to a
            # weight-dependent signature instead of the all-zero fixed point
            conv.b.data[:] = (0.1 * rng.standard_normal(conv.b.shape)).astype(dtype)
            self.stages.append(conv)
            c_in = width
        self.proj = Linear(rng, c_in, cfg.model_dim, dtype)
        self.call_count = 0  # forward invocations; joint policy implies one per video

    def __call__(self, frames: Tensor) -> Tensor:
        """(B, 3, F, H, W) -> (B, grid*grid, model_dim); time is mean-pooled."""
        if frames.ndim != 5 or frames.shape[1] != 3:
            raise DataError(f"prompt encoder expects (B,3,F,H,W), got {frames.shape}")
        x = frames
        for conv in self.stages:
            x = T.gelu(conv(x))
        x = T.mean(x, axis=2)  # (B, C, H', W')
        cells = _adaptive_mean_pool(x, self.config.grid)  # (B, C, g, g)
        b, c, g, _ = cells.shape
        tokens = T.reshape(T.transpose(cells, (0, 2, 3, 1)), (b, g * g, c))
        self.call_count += 1
        return self.proj(tokens)


def _adaptive_mean_pool(x: Tensor, grid: int) -> Tensor:
    """Mean-pool (B, C, H, W) onto a grid x grid cell layout (any H, W >= 1)."""
    b, c, h, w = x.shape
    rows = []
    for a in range(grid):
        r0, r1 = (a * h) // grid, max((a * h) // grid + 1, -(-((a + 1) * h) // grid))
        cols = []
        for bb in range(grid):
            c0, c1 = (bb * w) // grid, max((bb * w) // grid + 1, -(-((bb + 1) * w) // grid))
            cell = T.mean(T.reshape(x[:, :, r0:r1, c0:c1], (b, c, -1)), axis=2, keepdims=True)
            cols.append(cell)
        rows.append(T.concat(cols, axis=2))
    return T.reshape(T.concat(rows, axis=2), (b, c, grid, grid))


def select_key_frames(selector, frame_count: int) -> list[int]:
    """Resolve a key-frame selector: 'middle', an index, or a list of indices."""
    if selector == "middle":
        idx = [frame_count // 2]
    elif isinstance(selector, int):
        idx = [selector]
    elif isinstance(selector, (list, tuple)):
        idx = [int(i) for i in selector]
        if not idx:
            raise ConfigError("key-frame selector list is empty")
    else:
        raise ConfigError(f"unknown key-frame selector: {selector!r}")
    for i in idx:
        if not (0 <= i < frame_count):
            raise DataError(f"key frame {i} outside video of {frame_count} frames")
    return idx


def extract_prompt(
    video: np.ndarray,
    encoder: PromptEncoder,
    selector="middle",
) -> PromptEmbedding:
    """Embed the selected key frames of a (3, T, H, W) video; average if several.

    Returns tokens shaped (P, model_dim). When called while a gradient tape is
    recording, the tokens stay connected to the encoder parameters.
    """
    if video.ndim != 4 or video.shape[0] != 3:
        raise DataError(f"expected video (3,T,H,W), got {video.shape}")
    idx = select_key_frames(selector, video.shape[1])
    per_frame = []
    for i in idx:
        frame = np.ascontiguousarray(video[None, :, i : i + 1], dtype=encoder.dtype)
        per_frame.append(encoder(Tensor(frame)))
    stacked = per_frame[0] if len(per_frame) == 1 else T.concat(per_frame, axis=0)
    tokens = T.mean(stacked, axis=0) if len(per_frame) > 1 else T.reshape(stacked, stacked.shape[1:])
    return PromptEmbedding(tokens=tokens, source_frame_indices=idx)
