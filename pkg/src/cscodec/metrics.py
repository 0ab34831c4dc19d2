"""Quality metrics on [0, 1] grayscale images, evaluated at 8-bit scale."""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeMismatchError, TooSmallError

PSNR_PERFECT = math.inf


def psnr(x: np.ndarray, x_hat: np.ndarray) -> float:
    """10 log10(255^2 / MSE) on 8-bit-scaled values; inf when identical."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeMismatchError(f"psnr shapes differ: {x.shape} vs {x_hat.shape}")
    mse = float(np.mean((255.0 * (x - x_hat)) ** 2))
    if mse == 0.0:
        return PSNR_PERFECT
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def _windowed_mean(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    # valid-mode weighted local means via a sliding view; images are small
    # enough that the einsum stays cheap
    k = window.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(x, (k, k))
    return np.einsum("ijkl,kl->ij", view, window)


def ssim(x: np.ndarray, x_hat: np.ndarray, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM, 11x11 Gaussian window sigma 1.5, dynamic range 255."""
    x = np.asarray(x, dtype=np.float64) * 255.0
    x_hat = np.asarray(x_hat, dtype=np.float64) * 255.0
    if x.shape != x_hat.shape:
        raise ShapeMismatchError(f"ssim shapes differ: {x.shape} vs {x_hat.shape}")
    if min(x.shape) < 11:
        raise TooSmallError(f"ssim needs min side >= 11, got {x.shape}")
    c1 = (k1 * 255.0) ** 2
    c2 = (k2 * 255.0) ** 2
    window = _gaussian_window()
    mu_x = _windowed_mean(x, window)
    mu_y = _windowed_mean(x_hat, window)
    sigma_x = _windowed_mean(x * x, window) - mu_x * mu_x
    sigma_y = _windowed_mean(x_hat * x_hat, window) - mu_y * mu_y
    sigma_xy = _windowed_mean(x * x_hat, window) - mu_x * mu_y
    score = ((2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2)
    )
    return float(score.mean())
