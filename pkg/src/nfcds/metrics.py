"""Image fidelity metrics and radial spectral error profiles.

All metrics accept ``(H, W)`` or ``(H, W, C)`` arrays of matching shape
and accumulate in float64.  ``peak`` is the dynamic range of the data
(1.0 for unit-range images).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .spectral import forward_fft2, frequency_grid

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3):
        raise ConfigError(f"expected (H, W) or (H, W, C), got shape {a.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ConfigError("non-finite values in metric input")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``inf``.

    Defined as ``10 * log10(peak^2 / mse)`` with the mean squared error
    taken over all pixels and channels.
    """
    a, b = _check_pair(a, b)
    if peak <= 0:
        raise ConfigError(f"peak must be > 0, got {peak}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    xs = np.arange(size, dtype=np.float64) - size // 2
    w = np.exp(-0.5 * (xs / sigma) ** 2)
    w2d = np.outer(w, w)
    return w2d / w2d.sum()


def _ssim_channel(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    window = _gaussian_window()
    wa = np.lib.stride_tricks.sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW))
    wb = np.lib.stride_tricks.sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW))
    mu_a = np.einsum("ijkl,kl->ij", wa, window)
    mu_b = np.einsum("ijkl,kl->ij", wb, window)
    ea2 = np.einsum("ijkl,kl->ij", wa * wa, window)
    eb2 = np.einsum("ijkl,kl->ij", wb * wb, window)
    eab = np.einsum("ijkl,kl->ij", wa * wb, window)
    var_a = ea2 - mu_a * mu_a
    var_b = eb2 - mu_b * mu_b
    cov = eab - mu_a * mu_b
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(np.mean(score))


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean structural similarity over all valid window positions.

    Uses the canonical 11x11 Gaussian window (sigma 1.5) with stability
    constants ``k1 = 0.01`` and ``k2 = 0.03``; multichannel inputs are
    scored per channel and averaged.
    """
    a, b = _check_pair(a, b)
    if peak <= 0:
        raise ConfigError(f"peak must be > 0, got {peak}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ConfigError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape[:2]}"
        )
    if a.ndim == 2:
        return _ssim_channel(a, b, peak)
    return float(
        np.mean([_ssim_channel(a[:, :, c], b[:, :, c], peak) for c in range(a.shape[2])])
    )


def radial_bins(h: int, w: int) -> np.ndarray:
    """Integer annulus index (nearest radius) per DC-centered bin."""
    return np.floor(frequency_grid(h, w).radii + 0.5).astype(int)


def radial_spectral_error(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean spectral magnitude error per integer radius annulus.

    Returns ``(radii, errors)`` where ``errors[k]`` averages
    ``|F(a) - F(b)|`` over every frequency bin whose radius rounds to
    ``radii[k]``.  Multichannel spectra are averaged across channels
    before binning.
    """
    a, b = _check_pair(a, b)
    diff = np.abs(forward_fft2(a).coefficients - forward_fft2(b).coefficients)
    if diff.ndim == 3:
        diff = diff.mean(axis=2)
    bins = radial_bins(*a.shape[:2])
    counts = np.bincount(bins.ravel())
    sums = np.bincount(bins.ravel(), weights=diff.ravel())
    radii = np.arange(counts.size)
    present = counts > 0
    errors = np.zeros(counts.size)
    errors[present] = sums[present] / counts[present]
    return radii[present], errors[present]


__all__ = [
    "SSIM_K1",
    "SSIM_K2",
    "SSIM_SIGMA",
    "SSIM_WINDOW",
    "psnr",
    "radial_bins",
    "radial_spectral_error",
    "ssim",
]
