"""Background-masked weighted SSIM scoring.

The per-pixel SSIM map uses uniform (unweighted) window statistics over an
odd square window (default 11x11) with the standard constants
C1 = (0.01 * 255)^2 and C2 = (0.03 * 255)^2, computed per channel and
averaged across R, G, B. Values exist only where the full window fits, so
the map shrinks by window-1 in each axis; borders are background in this
pipeline anyway.

A plain SSIM mean rewards a large matching background regardless of how
poor the reconstruction is, so pixels where BOTH images equal the exact
background RGB get weight 0 and everything else weight 1; the weighted
mean then reflects the object only. Exact 8-bit equality is sound here
because the internal renderer writes background pixels bit-exactly;
externally rendered images with anti-aliased edges will under-mask.

Per-frame scoring is independent and side-effect free; aggregation is a
sequential reduction in frame order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .mesh_io import RasterImage

__all__ = [
    "MetricsError",
    "NoForegroundOverlapError",
    "SsimMap",
    "FrameScore",
    "SsimReport",
    "ssim_map",
    "background_mask",
    "weighted_ssim",
    "score_model",
]

DEFAULT_WINDOW = 11
DYNAMIC_RANGE = 255.0  # 8-bit images only
C1 = (0.01 * DYNAMIC_RANGE) ** 2
C2 = (0.03 * DYNAMIC_RANGE) ** 2


class MetricsError(ValueError):
    """Invalid metric inputs."""


class NoForegroundOverlapError(MetricsError):
    """Every pixel of both images is background; the weighted mean is undefined."""


@dataclass(frozen=True)
class SsimMap:
    """Per-pixel SSIM over the valid-window region, with optional 0/1
    foreground weights of the same shape."""

    values: np.ndarray
    weights: Optional[np.ndarray] = None

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FrameScore:
    index: int
    ssim: float
    foreground_px: int


@dataclass(frozen=True)
class SsimReport:
    """Per-frame weighted SSIMs and their mean. Frames whose mask is empty
    are excluded from the mean and listed in failed_frames."""

    per_frame: tuple[FrameScore, ...]
    global_score: float
    frames_used: int
    failed_frames: tuple[int, ...] = ()


def _check_pair(a: RasterImage, b: RasterImage, window: int):
    if window < 1 or window % 2 == 0:
        raise MetricsError("window must be a positive odd integer")
    if a.width != b.width or a.height != b.height:
        raise MetricsError(
            f"image dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    if a.width < window or a.height < window:
        raise MetricsError(f"images must be at least {window}x{window}")


def ssim_map(a: RasterImage, b: RasterImage, window: int = DEFAULT_WINDOW) -> SsimMap:
    """Channel-averaged SSIM map of two equally sized images.

    Window means, variances and covariance are uniform population
    statistics; the standard form
    ((2*mu_a*mu_b + C1) * (2*cov + C2)) /
    ((mu_a^2 + mu_b^2 + C1) * (var_a + var_b + C2))
    is evaluated per channel at every pixel where the full window fits.
    """
    _check_pair(a, b, window)
    af = a.pixels.astype(np.float64)
    bf = b.pixels.astype(np.float64)
    size = (window, window, 1)

    mu_a = uniform_filter(af, size)
    mu_b = uniform_filter(bf, size)
    s_aa = uniform_filter(af * af, size)
    s_bb = uniform_filter(bf * bf, size)
    s_ab = uniform_filter(af * bf, size)
    var_a = s_aa - mu_a * mu_a
    var_b = s_bb - mu_b * mu_b
    cov = s_ab - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    full = num / den

    r = window // 2
    valid = full[r : a.height - r, r : a.width - r, :]
    return SsimMap(values=valid.mean(axis=2))


def background_mask(a: RasterImage, b: RasterImage, background,
                    window: int = DEFAULT_WINDOW) -> np.ndarray:
    """0/1 weights over the SSIM valid region: 0 where both images equal
    the background RGB exactly, 1 elsewhere."""
    _check_pair(a, b, window)
    bg = np.asarray(background, dtype=np.uint8)
    both_bg = np.all(a.pixels == bg, axis=2) & np.all(b.pixels == bg, axis=2)
    weights = (~both_bg).astype(np.uint8)
    r = window // 2
    return weights[r : a.height - r, r : a.width - r]


def weighted_ssim(a: RasterImage, b: RasterImage, background,
                  window: int = DEFAULT_WINDOW) -> float:
    """Foreground-weighted mean of the SSIM map."""
    values = ssim_map(a, b, window).values
    weights = background_mask(a, b, background, window)
    total = int(weights.sum())
    if total == 0:
        raise NoForegroundOverlapError("no foreground overlap: both images are pure background")
    return float((values * weights).sum() / total)


def score_model(gt_frames: Sequence[RasterImage], recon_frames: Sequence[RasterImage],
                background, window: int = DEFAULT_WINDOW) -> SsimReport:
    """Weighted SSIM per order-paired frame, averaged into the model score.

    Frame pairs with no foreground overlap are flagged and excluded from
    the mean; if every frame fails, a MetricsError is raised.
    """
    if len(gt_frames) != len(recon_frames):
        raise MetricsError(
            f"frame count mismatch: {len(gt_frames)} ground truth vs {len(recon_frames)} reconstruction"
        )
    scored: list[FrameScore] = []
    failed: list[int] = []
    for i, (ga, rb) in enumerate(zip(gt_frames, recon_frames)):
        weights = background_mask(ga, rb, background, window)
        total = int(weights.sum())
        if total == 0:
            failed.append(i)
            continue
        values = ssim_map(ga, rb, window).values
        scored.append(
            FrameScore(index=i, ssim=float((values * weights).sum() / total),
                       foreground_px=total)
        )
    if not scored:
        raise MetricsError("every frame pair is pure background; nothing to score")
    global_score = float(np.mean([f.ssim for f in scored]))
    return SsimReport(
        per_frame=tuple(scored),
        global_score=global_score,
        frames_used=len(scored),
        failed_frames=tuple(failed),
    )
