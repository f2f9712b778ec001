"""Evaluation: fidelity (PSNR/SSIM), warp consistency, seam diagnostics.

All metrics are pure numpy with deterministic results. Flow for real footage
comes from exhaustive block matching (8x8 blocks, +-4 px search) rather than
a learned estimator, so every value here can be reproduced by a naive loop.
Warping error follows the common convention: estimate backward flow (from
frame t+1 to frame t), gather-warp frame t, and mask out pixels that fail
forward-backward consistency or whose source falls outside the frame. The
reported ``e_warp`` is that masked MSE scaled by 1e3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

PSNR_CAP_DB = 99.0


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"metric inputs must match: {a.shape} vs {b.shape}")
    if a.ndim != 4 or a.shape[0] != 3:
        raise DataError(f"expected (3,T,H,W) videos, got {a.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Per-frame PSNR in dB (unit data range), averaged over frames, capped at 99."""
    a, b = _check_pair(a, b)
    frames = a.shape[1]
    vals = []
    for t in range(frames):
        mse = float(np.mean((a[:, t] - b[:, t]) ** 2))
        vals.append(PSNR_CAP_DB if mse == 0.0 else min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse)))
    return float(np.mean(vals))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    xs = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (xs / sigma) ** 2)
    win = np.outer(g, g)
    return win / win.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    """2-D correlation, valid region only."""
    k = win.shape[0]
    h, w = img.shape
    out = np.zeros((h - k + 1, w - k + 1))
    for i in range(k):
        for j in range(k):
            out += win[i, j] * img[i : i + h - k + 1, j : j + w - k + 1]
    return out


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    """Windowed SSIM (Gaussian window, standard constants), frame-averaged."""
    a, b = _check_pair(a, b)
    if a.shape[2] < window or a.shape[3] < window:
        raise DataError(f"frames {a.shape[2:]} smaller than the {window}x{window} SSIM window")
    win = _gaussian_window(window, sigma)
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for t in range(a.shape[1]):
        for c in range(3):
            x, y = a[c, t], b[c, t]
            mu_x = _filter_valid(x, win)
            mu_y = _filter_valid(y, win)
            xx = _filter_valid(x * x, win) - mu_x**2
            yy = _filter_valid(y * y, win) - mu_y**2
            xy = _filter_valid(x * y, win) - mu_x * mu_y
            num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
            den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
            vals.append(np.mean(num / den))
    return float(np.mean(vals))


# --------------------------------------------------------------------------
# block-matching flow and warping error
# --------------------------------------------------------------------------

def _to_gray(frame: np.ndarray) -> np.ndarray:
    return frame.mean(axis=0)


def block_matching_flow(
    frame_a: np.ndarray, frame_b: np.ndarray, block: int = 8, radius: int = 4
) -> np.ndarray:
    """Per-pixel flow (2, H, W) such that frame_a[p] ~= frame_b[p + d].

    Exhaustive SAD search of +-radius per block on grayscale; flow is constant
    within each block. Blocks at the border are clipped to the frame.
    """
    ga, gb = _to_gray(np.asarray(frame_a)), _to_gray(np.asarray(frame_b))
    h, w = ga.shape
    flow = np.zeros((2, h, w), dtype=np.float64)
    for by in range(0, h, block):
        for bx in range(0, w, block):
            y1, x1 = min(by + block, h), min(bx + block, w)
            patch = ga[by:y1, bx:x1]
            best, best_d = None, (0, 0)
            for dy in range(-radius, radius + 1):
                sy, ey = by + dy, y1 + dy
                if sy < 0 or ey > h:
                    continue
                for dx in range(-radius, radius + 1):
                    sx, ex = bx + dx, x1 + dx
                    if sx < 0 or ex > w:
                        continue
                    sad = float(np.abs(patch - gb[sy:ey, sx:ex]).sum())
                    if best is None or sad < best - 1e-12:
                        best, best_d = sad, (dy, dx)
            flow[0, by:y1, bx:x1] = best_d[0]
            flow[1, by:y1, bx:x1] = best_d[1]
    return flow


def warp_gather(frame: np.ndarray, flow: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """out[p] = frame[p + flow[p]] (integer flow); returns (warped, in_bounds)."""
    arr = np.asarray(frame)
    h, w = arr.shape[-2], arr.shape[-1]
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    src_y = ys + np.rint(flow[0]).astype(np.int64)
    src_x = xs + np.rint(flow[1]).astype(np.int64)
    in_bounds = (src_y >= 0) & (src_y < h) & (src_x >= 0) & (src_x < w)
    cy = np.clip(src_y, 0, h - 1)
    cx = np.clip(src_x, 0, w - 1)
    warped = arr[..., cy, cx]
    return warped, in_bounds


def warp_error(
    video: np.ndarray,
    flow_source="blocks",
    block: int = 8,
    radius: int = 4,
) -> float:
    """Occlusion-masked flow-warping error, scaled by 1e3.

    ``flow_source`` is "blocks" for block-matching, or a callable t ->
    backward flow (2, H, W) mapping frame t+1 pixels to their source in
    frame t (ground truth on synthetic data).
    """
    arr = np.asarray(video, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[0] != 3:
        raise DataError(f"expected (3,T,H,W) video, got {arr.shape}")
    frames = arr.shape[1]
    if frames < 2:
        raise DataError("warp error needs at least 2 frames")
    total_err, total_px = 0.0, 0
    for t in range(frames - 1):
        cur, nxt = arr[:, t], arr[:, t + 1]
        if flow_source == "blocks":
            bwd = block_matching_flow(nxt, cur, block, radius)
            fwd = block_matching_flow(cur, nxt, block, radius)
            fwd_at_src, src_ok = warp_gather(fwd, bwd)
            consistent = (np.abs(bwd + fwd_at_src) <= 1.0).all(axis=0)
            pred, in_bounds = warp_gather(cur, bwd)
            mask = src_ok & in_bounds & consistent
        else:
            bwd = np.asarray(flow_source(t), dtype=np.float64)
            if bwd.shape != (2,) + arr.shape[2:]:
                raise DataError(f"ground-truth flow must be (2,H,W), got {bwd.shape}")
            pred, in_bounds = warp_gather(cur, bwd)
            mask = in_bounds
        if mask.any():
            diff = (nxt - pred) ** 2
            total_err += float(diff[:, mask].sum())
            total_px += int(mask.sum()) * 3
    if total_px == 0:
        raise DataError("warp error mask is empty for every frame pair")
    return 1e3 * total_err / total_px


def constant_flow(shape_hw: tuple[int, int], vy: int, vx: int) -> np.ndarray:
    """Backward flow for content translating by (+vy, +vx) px/frame."""
    h, w = shape_hw
    flow = np.zeros((2, h, w))
    flow[0] = -vy
    flow[1] = -vx
    return flow


# --------------------------------------------------------------------------
# seam and profile diagnostics
# --------------------------------------------------------------------------

def boundary_drift(video: np.ndarray, seam_indices) -> float:
    """Mean absolute frame delta across chunk seams (t -> t+1 transitions)."""
    arr = np.asarray(video, dtype=np.float64)
    if arr.ndim != 4:
        raise DataError(f"expected (3,T,H,W) video, got {arr.shape}")
    frames = arr.shape[1]
    seams = [int(s) for s in seam_indices]
    if not seams:
        return 0.0
    for s in seams:
        if not (0 <= s < frames - 1):
            raise DataError(f"seam index {s} outside valid transitions [0, {frames - 2}]")
    vals = [float(np.mean(np.abs(arr[:, s + 1] - arr[:, s]))) for s in seams]
    return float(np.mean(vals))


def temporal_profile(video: np.ndarray, row_index: int) -> np.ndarray:
    """Stack one pixel row across frames: output (3, T, W), row t = frame t."""
    arr = np.asarray(video)
    if arr.ndim != 4 or arr.shape[0] != 3:
        raise DataError(f"expected (3,T,H,W) video, got {arr.shape}")
    if not (0 <= row_index < arr.shape[2]):
        raise DataError(f"row {row_index} outside frame height {arr.shape[2]}")
    return np.array(arr[:, :, row_index, :])


def profile_smoothness(profile: np.ndarray) -> float:
    """Mean absolute row-to-row change of a temporal profile (lower = smoother)."""
    arr = np.asarray(profile, dtype=np.float64)
    if arr.shape[1] < 2:
        return 0.0
    return float(np.mean(np.abs(np.diff(arr, axis=1))))


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass
class MetricReport:
    clip: str
    psnr: float
    ssim: float
    e_warp: float
    boundary_drift: float
    extra: dict = field(default_factory=dict)

    def validate(self) -> "MetricReport":
        if self.psnr < 0:
            raise DataError("psnr must be >= 0")
        if not (-1.0 <= self.ssim <= 1.0 + 1e-12):
            raise DataError("ssim must lie in [-1, 1]")
        if self.e_warp < 0:
            raise DataError("e_warp must be >= 0")
        return self

    def row(self) -> dict:
        return {
            "clip": self.clip,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "e_warp": self.e_warp,
            "boundary_drift": self.boundary_drift,
            **self.extra,
        }


def aggregate_reports(reports: list[MetricReport]) -> dict:
    if not reports:
        raise DataError("cannot aggregate zero metric reports")
    keys = ("psnr", "ssim", "e_warp", "boundary_drift")
    return {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}


def evaluate_clip(
    clip_name: str,
    sr: np.ndarray,
    hr: np.ndarray,
    seam_indices=(),
    flow_source="blocks",
) -> MetricReport:
    return MetricReport(
        clip=clip_name,
        psnr=psnr(sr, hr),
        ssim=ssim(sr, hr),
        e_warp=warp_error(sr, flow_source=flow_source),
        boundary_drift=boundary_drift(sr, seam_indices),
    ).validate()
