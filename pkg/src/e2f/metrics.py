"""Frame-fidelity metrics: per-frame MSE and Gaussian-windowed SSIM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .simulator import FrameSequence

__all__ = ["MetricReport", "mse", "ssim", "compare"]

SSIM_CONVENTION = "ssim averaged over per-channel values, valid windows only"


@dataclass(frozen=True)
class MetricReport:
    mse_per_frame: np.ndarray
    ssim_per_frame: np.ndarray

    @property
    def mse_mean(self) -> float:
        return float(self.mse_per_frame.mean())

    @property
    def ssim_mean(self) -> float:
        return float(self.ssim_per_frame.mean())


def _as_data(frames) -> np.ndarray:
    data = frames.data if isinstance(frames, FrameSequence) else np.asarray(frames)
    if data.ndim != 4:
        raise ValueError("expected frames of shape (F, C, H, W)")
    return np.asarray(data, dtype=np.float64)


def mse(a, b) -> tuple[np.ndarray, float]:
    """Mean squared difference, per frame and averaged over the sequence."""
    da, db = _as_data(a), _as_data(b)
    if da.shape != db.shape:
        raise ValueError(f"shape mismatch: {da.shape} vs {db.shape}")
    per_frame = ((da - db) ** 2).reshape(da.shape[0], -1).mean(axis=1)
    return per_frame, float(per_frame.mean())


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_channel(a: np.ndarray, b: np.ndarray, window: np.ndarray,
                  c1: float, c2: float) -> float:
    half = window.shape[0] // 2
    sl = (slice(half, -half), slice(half, -half))

    def smooth(img):
        return ndimage.correlate(img, window, mode="constant")[sl]

    mu_a = smooth(a)
    mu_b = smooth(b)
    var_a = smooth(a * a) - mu_a ** 2
    var_b = smooth(b * b) - mu_b ** 2
    cov = smooth(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b, window: int = 11, k1: float = 0.01, k2: float = 0.03,
         data_range: float = 1.0, sigma: float = 1.5
         ) -> tuple[np.ndarray, float]:
    """Structural similarity with an 11x11 Gaussian window (std 1.5).

    Local statistics are evaluated only where the window fits entirely
    inside the frame; multi-channel frames average the per-channel values.
    """
    da, db = _as_data(a), _as_data(b)
    if da.shape != db.shape:
        raise ValueError(f"shape mismatch: {da.shape} vs {db.shape}")
    if da.shape[2] < window or da.shape[3] < window:
        raise ValueError(f"frames must be at least {window}x{window}")
    win = _gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    per_frame = np.array([
        np.mean([_ssim_channel(da[f, ch], db[f, ch], win, c1, c2)
                 for ch in range(da.shape[1])])
        for f in range(da.shape[0])
    ])
    return per_frame, float(per_frame.mean())


def compare(a, b) -> MetricReport:
    mse_pf, _ = mse(a, b)
    ssim_pf, _ = ssim(a, b)
    return MetricReport(mse_pf, ssim_pf)
