"""Evaluation metrics on normalized single-channel maps: MAE, RMSE, PSNR,
and multi-scale SSIM.

MS-SSIM uses an 11x11 Gaussian window (sigma 1.5), K1=0.01/K2=0.03 at peak
1, 2x mean-pool downsampling between scales, and the standard 5-scale
exponents truncated to the scales that still fit one window and renormalized
to sum 1. Negative contrast-structure means are clamped to zero at the
intermediate scales (instead of NaN-ing under fractional powers); the final
scale keeps its sign through a sign-preserving power, so values lie in
[-1, 1] and anti-correlated inputs score at or below zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MS_SSIM_EXPONENTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP_DB = 100.0


class MetricsError(ValueError):
    pass


@dataclass
class MetricsReport:
    mae: float
    rmse: float
    psnr_db: float
    ms_ssim: float
    n_samples: int
    psnr_capped: int = 0

    def row(self) -> str:
        return (f"{self.n_samples}\t{self.mae:.6f}\t{self.rmse:.6f}\t"
                f"{self.psnr_db:.4f}\t{self.ms_ssim:.6f}")

    @staticmethod
    def header() -> str:
        return "n\tmae\trmse\tpsnr_db\tms_ssim"


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise MetricsError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def mae(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean(np.abs(x - y)))


def rmse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def psnr(x, y, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE), capped at PSNR_CAP_DB when MSE is zero."""
    x, y = _pair(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(float(10.0 * np.log10(peak * peak / mse)), PSNR_CAP_DB)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    c = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - c) ** 2) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_means(x, y, window, peak):
    """Per-window luminance and contrast-structure means."""
    wx = sliding_window_view(x, window.shape)
    wy = sliding_window_view(y, window.shape)
    mux = np.tensordot(wx, window, axes=2)
    muy = np.tensordot(wy, window, axes=2)
    sxx = np.tensordot(wx * wx, window, axes=2) - mux * mux
    syy = np.tensordot(wy * wy, window, axes=2) - muy * muy
    sxy = np.tensordot(wx * wy, window, axes=2) - mux * muy
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    lum = (2 * mux * muy + c1) / (mux * mux + muy * muy + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _downsample_2x(x):
    h, w = x.shape
    x = x[: h - h % 2, : w - w % 2]
    return 0.25 * (x[0::2, 0::2] + x[0::2, 1::2] + x[1::2, 0::2] + x[1::2, 1::2])


def feasible_scales(shape, window: int = SSIM_WINDOW, max_scales: int = 5) -> int:
    n = 0
    h, w = shape
    while n < max_scales and min(h, w) >= window:
        n += 1
        h, w = h // 2, w // 2
    return n


def ms_ssim(x, y, peak: float = 1.0) -> float:
    x, y = _pair(x, y)
    if x.ndim != 2:
        raise MetricsError("ms_ssim expects 2-D maps")
    n_scales = feasible_scales(x.shape)
    if n_scales == 0:
        raise MetricsError(f"image {x.shape} smaller than one {SSIM_WINDOW}x{SSIM_WINDOW} window")
    exps = np.array(MS_SSIM_EXPONENTS[:n_scales])
    exps = exps / exps.sum()
    window = gaussian_window()

    result = 1.0
    cx, cy = x, y
    for j in range(n_scales):
        ssim_mean, cs_mean = _ssim_means(cx, cy, window, peak)
        if j == n_scales - 1:
            result *= np.sign(ssim_mean) * np.abs(ssim_mean) ** exps[j]
        else:
            result *= max(cs_mean, 0.0) ** exps[j]
            cx, cy = _downsample_2x(cx), _downsample_2x(cy)
    return float(np.clip(result, -1.0, 1.0))


def compute_report(pairs, peak: float = 1.0) -> MetricsReport:
    """Average per-sample metrics over an iterable of (reference, candidate)."""
    maes, rmses, psnrs, ssims = [], [], [], []
    capped = 0
    for x, y in pairs:
        maes.append(mae(x, y))
        rmses.append(rmse(x, y))
        p = psnr(x, y, peak)
        if p >= PSNR_CAP_DB:
            capped += 1
        psnrs.append(p)
        ssims.append(ms_ssim(x, y, peak))
    if not maes:
        raise MetricsError("no sample pairs to evaluate")
    return MetricsReport(
        mae=float(np.mean(maes)),
        rmse=float(np.mean(rmses)),
        psnr_db=float(np.mean(psnrs)),
        ms_ssim=float(np.mean(ssims)),
        n_samples=len(maes),
        psnr_capped=capped,
    )
