"""Reference image quality metrics for cube pairs in [0, 1]:
band-averaged PSNR, band-averaged windowed SSIM, and the per-pixel
spectral angle (SAM) in radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP = 120.0  # dB, applied when a band's MSE drops below 1e-12
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricsReport:
    psnr: float  # dB, mean over bands
    ssim: float  # mean over bands
    sam: float  # radians, mean over pixels

    def __str__(self):
        return f"psnr {self.psnr:.2f} dB | ssim {self.ssim:.4f} | sam {self.sam:.4f} rad"


def _check_pair(x, y):
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 3:
        raise ValueError("expected (bands, rows, cols) cubes")
    return x, y


def psnr(x, y) -> float:
    """Mean over bands of 10*log10(1 / MSE_band), capped at 120 dB."""
    x, y = _check_pair(x, y)
    mse = ((x - y) ** 2).mean(axis=(1, 2))
    vals = np.where(mse < 1e-12, PSNR_CAP, 10.0 * np.log10(1.0 / np.maximum(mse, 1e-300)))
    return float(np.minimum(vals, PSNR_CAP).mean())


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _windowed_mean(img, kernel):
    win = sliding_window_view(img, kernel.shape)
    return np.einsum("hwij,ij->hw", win, kernel, optimize=True)


def ssim_band(x2d, y2d) -> float:
    """Standard windowed SSIM on one band (dynamic range 1)."""
    kernel = _gaussian_window()
    if min(x2d.shape) < SSIM_WINDOW:
        raise ValueError(f"band extent smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    mu_x = _windowed_mean(x2d, kernel)
    mu_y = _windowed_mean(y2d, kernel)
    xx = _windowed_mean(x2d * x2d, kernel) - mu_x**2
    yy = _windowed_mean(y2d * y2d, kernel) - mu_y**2
    xy = _windowed_mean(x2d * y2d, kernel) - mu_x * mu_y
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float((num / den).mean())


def ssim(x, y) -> float:
    x, y = _check_pair(x, y)
    return float(np.mean([ssim_band(xb, yb) for xb, yb in zip(x, y)]))


def sam(x, y) -> float:
    """Mean spectral angle in radians; zero-spectrum pixels are skipped."""
    x, y = _check_pair(x, y)
    xs = x.reshape(x.shape[0], -1).T  # (pixels, bands)
    ys = y.reshape(y.shape[0], -1).T
    nx = np.linalg.norm(xs, axis=1)
    ny = np.linalg.norm(ys, axis=1)
    valid = (nx > 0) & (ny > 0)
    if not valid.any():
        return 0.0
    # chord form of the angle: exact at 0 where arccos(dot) loses bits
    u = xs[valid] / nx[valid, None]
    v = ys[valid] / ny[valid, None]
    chord = np.linalg.norm(u - v, axis=1)
    angles = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    return float(angles.mean())


def evaluate_pair(clean, test) -> MetricsReport:
    return MetricsReport(psnr=psnr(clean, test), ssim=ssim(clean, test), sam=sam(clean, test))
