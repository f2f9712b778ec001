"""Causal 3D VAE: 8x spatial compression, 4n+1 -> n+1 temporal compression.

Temporal scheme: the first pixel frame is encoded on its own; every following
group of 4 frames becomes one latent frame via a stride-4 causal convolution.
Groups are disjoint, so streaming chunks encode/decode to exactly the same
values as a full pass, and zeroing pixel frames beyond 4f cannot touch latent
frames <= f.

Spatial scheme: three stride-2 encoder stages mirrored by three
nearest-upsample+conv decoder stages, all zero-padded. The decoder's spatial
receptive-field radius (in latent cells) is derived from the stage list and
exported; ``decode_local`` with at least that halo is bit-identical to the
matching crop of a full decode — this is checked, not assumed, because the
conv kernel was deliberately built on an extent-independent reduction order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .clips import CropWindow, LatentClip, VideoClip
from .errors import ConfigError, DataError
from .nn import Conv3d, Module
from .rng import make_rng
from .tensor import Tensor


@dataclass
class VaeConfig:
    latent_channels: int = 8
    enc_widths: tuple[int, ...] = (24, 32, 48, 64)
    dec_widths: tuple[int, ...] = (64, 48, 32, 24)
    init_seed: int = 100

    def __post_init__(self):
        if len(self.enc_widths) != 4 or len(self.dec_widths) != 4:
            raise ConfigError("enc_widths/dec_widths must have 4 entries (pack + 3 stages)")


class CausalVae(Module):
    """Encoder/decoder pair; all public array APIs are (C, F, h, w) / (3, T, H, W)."""

    def __init__(self, config: VaeConfig | None = None, dtype=np.float32):
        cfg = config or VaeConfig()
        self.config = cfg
        self.dtype = np.dtype(dtype)
        rng = make_rng(cfg.init_seed, "vae-init")
        e = cfg.enc_widths
        d = cfg.dec_widths
        c = cfg.latent_channels

        self.pack_head = Conv3d(rng, 3, e[0], (1, 3, 3), 1, (0, 1, 1), dtype)
        self.pack_group = Conv3d(rng, 3, e[0], (4, 3, 3), (4, 1, 1), (0, 1, 1), dtype)
        self.enc_down = [
            Conv3d(rng, e[0], e[1], (1, 3, 3), (1, 2, 2), (0, 1, 1), dtype),
            Conv3d(rng, e[1], e[2], (1, 3, 3), (1, 2, 2), (0, 1, 1), dtype),
            Conv3d(rng, e[2], e[3], (1, 3, 3), (1, 2, 2), (0, 1, 1), dtype),
        ]
        self.enc_out = Conv3d(rng, e[3], 2 * c, (1, 3, 3), 1, (0, 1, 1), dtype)

        self.dec_in = Conv3d(rng, c, d[0], (1, 3, 3), 1, (0, 1, 1), dtype)
        self.dec_up = [
            Conv3d(rng, d[0], d[1], (1, 3, 3), 1, (0, 1, 1), dtype),
            Conv3d(rng, d[1], d[2], (1, 3, 3), 1, (0, 1, 1), dtype),
            Conv3d(rng, d[2], d[3], (1, 3, 3), 1, (0, 1, 1), dtype),
        ]
        self.dec_head_frame = Conv3d(rng, d[3], 3, (1, 3, 3), 1, (0, 1, 1), dtype)
        self.dec_group = Conv3d(rng, d[3], 12, (1, 3, 3), 1, (0, 1, 1), dtype)

    # -- receptive field ------------------------------------------------
    @property
    def receptive_radius(self) -> float:
        """Decoder spatial receptive-field radius in latent cells.

        Each conv of spatial radius 1 contributes 1/scale latent cells, where
        scale is the upsampling factor accumulated before it runs.
        """
        stages = [(1, 1)]  # dec_in at latent scale
        scale = 1
        for _ in self.dec_up:
            scale *= 2
            stages.append((scale, 1))
        stages.append((scale, 1))  # output head conv at full scale
        return float(sum(radius / s for s, radius in stages))

    @property
    def required_halo(self) -> int:
        return int(math.ceil(self.receptive_radius))

    # -- differentiable cores (batched Tensors) -------------------------
    def encode_t(self, x: Tensor, first: bool = True) -> tuple[Tensor, Tensor]:
        """(B,3,T,H,W) -> (mu, logvar), each (B,C,F,h,w).

        ``first=True`` expects T = 4n+1 (head frame + groups); ``first=False``
        is the streaming continuation and expects T = 4n.
        """
        t = x.shape[2]
        if x.shape[3] % 8 or x.shape[4] % 8:
            raise DataError(f"encode: H, W must be multiples of 8, got {x.shape[3]}x{x.shape[4]}")
        if first:
            if (t - 1) % 4:
                raise DataError(f"encode: T = 4n+1 required, got {t}")
            head = self.pack_head(x[:, :, 0:1])
            if t > 1:
                groups = self.pack_group(x[:, :, 1:])
                feat = T.concat([head, groups], axis=2)
            else:
                feat = head
        else:
            if t % 4 or t == 0:
                raise DataError(f"continuation encode: T = 4n required, got {t}")
            feat = self.pack_group(x)
        feat = T.gelu(feat)
        for conv in self.enc_down:
            feat = T.gelu(conv(feat))
        moments = self.enc_out(feat)
        c = self.config.latent_channels
        return moments[:, :c], T.clip(moments[:, c:], -12.0, 6.0)

    def decode_t(self, z: Tensor, first: bool = True) -> Tensor:
        """(B,C,F,h,w) -> (B,3,4F-3,8h,8w) when first, else (B,3,4F,8h,8w)."""
        feat = T.gelu(self.dec_in(z))
        for conv in self.dec_up:
            feat = T.repeat(T.repeat(feat, 2, axis=3), 2, axis=4)
            feat = T.gelu(conv(feat))
        f = z.shape[2]
        if first:
            head = self.dec_head_frame(feat[:, :, 0:1])
            parts = [head]
            if f > 1:
                parts.append(self._unpack_groups(self.dec_group(feat[:, :, 1:])))
            out = parts[0] if len(parts) == 1 else T.concat(parts, axis=2)
        else:
            out = self._unpack_groups(self.dec_group(feat))
        return T.sigmoid(out)

    @staticmethod
    def _unpack_groups(g: Tensor) -> Tensor:
        # (B, 12, F, H, W) -> (B, 3, 4F, H, W); channel = frame_offset*3 + rgb
        b, _, f, h, w = g.shape
        g = T.reshape(g, (b, 4, 3, f, h, w))
        g = T.transpose(g, (0, 2, 3, 1, 4, 5))
        return T.reshape(g, (b, 3, 4 * f, h, w))

    def decode_local_t(self, z: Tensor, window: CropWindow, first: bool = True) -> Tensor:
        """Decode only the haloed crop, trim the halo; exact for valid windows.

        The halo clamps at the latent borders: there the decoder applies the
        same border padding a full decode would, so clamped windows stay exact.
        """
        _, _, _, h, w = z.shape
        self._validate_window(window, h, w)
        i0 = max(0, window.i - window.halo)
        j0 = max(0, window.j - window.halo)
        i1 = min(h, window.i + window.h_c + window.halo)
        j1 = min(w, window.j + window.w_c + window.halo)
        patch = self.decode_t(z[:, :, :, i0:i1, j0:j1], first=first)
        mi = 8 * (window.i - i0)
        mj = 8 * (window.j - j0)
        return patch[:, :, :, mi : mi + 8 * window.h_c, mj : mj + 8 * window.w_c]

    def _validate_window(self, window: CropWindow, h: int, w: int) -> None:
        full = (
            window.i == 0
            and window.j == 0
            and window.h_c == h
            and window.w_c == w
            and window.halo == 0
        )
        if not full and window.halo < self.required_halo:
            raise DataError(
                f"halo {window.halo} below decoder receptive radius {self.required_halo}"
            )
        if (
            window.i < 0
            or window.j < 0
            or window.i + window.h_c > h
            or window.j + window.w_c > w
        ):
            raise DataError(f"crop window {window} exceeds latent extents {h}x{w}")

    # -- convenience wrappers (numpy in, numpy out, no tape) -------------
    def encode(self, video: VideoClip, sample: bool = False,
               rng: np.random.Generator | None = None, first: bool = True) -> LatentClip:
        if first:
            video.assert_encodable()
        x = Tensor(video.data[None].astype(self.dtype, copy=False))
        mu, logvar = self.encode_t(x, first=first)
        if sample:
            if rng is None:
                raise DataError("sampled encode needs an rng")
            eps = rng.standard_normal(mu.shape).astype(self.dtype)
            z = mu.data + np.exp(0.5 * logvar.data) * eps
        else:
            z = mu.data
        return LatentClip(z[0])

    def decode(self, latent: LatentClip, first: bool = True) -> VideoClip:
        z = Tensor(latent.data[None].astype(self.dtype, copy=False))
        return VideoClip(self.decode_t(z, first=first).data[0])

    def decode_local(self, latent: LatentClip, window: CropWindow, first: bool = True) -> VideoClip:
        z = Tensor(latent.data[None].astype(self.dtype, copy=False))
        return VideoClip(self.decode_local_t(z, window, first=first).data[0])

    # -- training objective ----------------------------------------------
    def elbo_terms(self, x: Tensor, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
        """(recon_mse, kl) for one batch; caller weights and sums them."""
        mu, logvar = self.encode_t(x, first=True)
        eps = Tensor(rng.standard_normal(mu.shape).astype(self.dtype))
        z = mu + T.exp(0.5 * logvar) * eps
        recon = self.decode_t(z, first=True)
        recon_mse = T.mean(T.square(recon - x))
        kl = 0.5 * T.mean(T.square(mu) + T.exp(logvar) - logvar - 1.0)
        return recon_mse, kl
