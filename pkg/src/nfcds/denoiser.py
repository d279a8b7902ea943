"""Noise-prediction backends and closed-form Gaussian posteriors.

Every backend exposes ``predict_noise(x_t, t, sched)``; the clean-image
estimate ``denoise_to_x0`` is always derived from that prediction through
the same inversion, so the two views of a backend can never drift apart.

The analytic backend conditions a stationary Gaussian prior on the noisy
state entirely in the Fourier basis, where the prior covariance is
diagonal.  It exists to make whole-pipeline claims checkable against
closed forms at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .bridge import BridgeClient, BridgeConfig
from .errors import ConfigError
from .schedule import NoiseSchedule
from .spectral import (
    SpectralField,
    forward_fft2,
    frequency_grid,
    inverse_fft2_real,
)


@dataclass(frozen=True, eq=False)
class StationaryGaussianPrior:
    """Gaussian prior with circulant covariance.

    ``spectral_power`` holds the per-frequency variance of the prior in
    the DC-centered layout; a field drawn from the prior satisfies
    ``E |F(x - mean)|^2 == H * W * spectral_power`` bin by bin.
    """

    mean: np.ndarray
    spectral_power: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        power = np.asarray(self.spectral_power, dtype=np.float64)
        if mean.ndim not in (2, 3):
            raise ConfigError(f"prior mean must be (H, W) or (H, W, C), got {mean.shape}")
        if power.shape != mean.shape[:2]:
            raise ConfigError(
                f"spectral power shape {power.shape} does not match mean {mean.shape[:2]}"
            )
        if not np.all(np.isfinite(power)) or np.any(power <= 0):
            raise ConfigError("spectral power must be finite and strictly positive")
        h, w = power.shape
        ch, cw = h // 2, w // 2
        iu = (2 * ch - np.arange(h)) % h
        iv = (2 * cw - np.arange(w)) % w
        mirrored = power[np.ix_(iu, iv)]
        if np.max(np.abs(power - mirrored)) > 1e-9 * np.max(power):
            raise ConfigError("spectral power must be symmetric under frequency negation")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "spectral_power", power)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mean.shape


def radial_power(
    h: int, w: int, amplitude: float = 1.0, exponent: float = 2.0, floor: float = 1e-3
) -> np.ndarray:
    """Radially decaying power table ``amplitude / (1 + r)^exponent + floor``."""
    if amplitude <= 0 or floor <= 0 or exponent < 0:
        raise ConfigError("radial power needs amplitude > 0, floor > 0, exponent >= 0")
    radii = frequency_grid(h, w).radii
    return amplitude / (1.0 + radii) ** exponent + floor


def sample_prior(
    prior: StationaryGaussianPrior, rng: np.random.Generator
) -> np.ndarray:
    """Exact draw from the prior by spectral shaping of white noise."""
    g = rng.standard_normal(prior.mean.shape)
    field = forward_fft2(g)
    shaped = np.sqrt(prior.spectral_power)
    if g.ndim == 3:
        shaped = shaped[:, :, None]
    sample = inverse_fft2_real(SpectralField(field.coefficients * shaped, field.grid))
    return prior.mean + sample


def posterior_mean_x0(
    prior: StationaryGaussianPrior, x_t: np.ndarray, alpha_bar: float
) -> np.ndarray:
    """Exact ``E[x0 | x_t]`` for ``x_t = sqrt(ab) x0 + sqrt(1-ab) eps``.

    Per frequency the Wiener gain is ``ab P / (ab P + (1 - ab))`` applied
    to ``F(x_t) / sqrt(ab) - F(mean)``.
    """
    if not 0.0 < alpha_bar <= 1.0:
        raise ConfigError(f"alpha_bar must lie in (0, 1], got {alpha_bar}")
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != prior.mean.shape:
        raise ConfigError(f"state shape {x_t.shape} does not match prior {prior.mean.shape}")
    p = prior.spectral_power
    gain = alpha_bar * p / (alpha_bar * p + (1.0 - alpha_bar))
    if x_t.ndim == 3:
        gain = gain[:, :, None]
    delta = x_t / math.sqrt(alpha_bar) - prior.mean
    field = forward_fft2(delta)
    shift = inverse_fft2_real(SpectralField(field.coefficients * gain, field.grid))
    return prior.mean + shift


def wiener_posterior_mean(
    prior: StationaryGaussianPrior, y: np.ndarray, sigma_y: float
) -> np.ndarray:
    """Closed-form ``E[x0 | y]`` for the direct observation ``y = x0 + sigma_y n``.

    This conditions the prior on the measurement itself, with no diffusion
    schedule involved, and serves as ground truth for end-to-end runs.
    """
    if sigma_y < 0:
        raise ConfigError(f"sigma_y must be >= 0, got {sigma_y}")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != prior.mean.shape:
        raise ConfigError(f"measurement shape {y.shape} does not match prior {prior.mean.shape}")
    p = prior.spectral_power
    gain = p / (p + sigma_y * sigma_y)
    if y.ndim == 3:
        gain = gain[:, :, None]
    field = forward_fft2(y - prior.mean)
    shift = inverse_fft2_real(SpectralField(field.coefficients * gain, field.grid))
    return prior.mean + shift


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OracleDenoiser:
    """Knows the clean image; predicts the exact noise that was added."""

    x0: np.ndarray

    def predict_noise(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        x0 = np.asarray(self.x0, dtype=np.float64)
        if x_t.shape != x0.shape:
            raise ConfigError(f"state shape {x_t.shape} does not match x0 {x0.shape}")
        ab = sched.alpha_bar_at(t)
        return (x_t - math.sqrt(ab) * x0) / math.sqrt(1.0 - ab)


@dataclass(frozen=True, eq=False)
class AnalyticGaussianDenoiser:
    """Posterior-mean denoiser under a stationary Gaussian prior."""

    prior: StationaryGaussianPrior

    def predict_noise(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        ab = sched.alpha_bar_at(t)
        x0_hat = posterior_mean_x0(self.prior, np.asarray(x_t, dtype=np.float64), ab)
        return (x_t - math.sqrt(ab) * x0_hat) / math.sqrt(1.0 - ab)


class ExternalDenoiser:
    """Delegates noise prediction to a bridge server.

    The noise schedule is announced to the server once, before the first
    request, so schedule-aware backends can invert their own smoothing.
    """

    def __init__(self, config: BridgeConfig):
        self.client = BridgeClient(config)

    def predict_noise(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        self.client.ensure_ready(sched.alpha_bar)
        return self.client.request(t, np.asarray(x_t, dtype=np.float64))

    def close(self) -> None:
        self.client.close()

    def __enter__(self) -> "ExternalDenoiser":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


DenoiserHandle = Union[OracleDenoiser, AnalyticGaussianDenoiser, ExternalDenoiser]


def predict_noise(
    handle: DenoiserHandle, x_t: np.ndarray, t: int, sched: NoiseSchedule
) -> np.ndarray:
    return handle.predict_noise(x_t, t, sched)


def denoise_to_x0(
    handle: DenoiserHandle, x_t: np.ndarray, t: int, sched: NoiseSchedule
) -> np.ndarray:
    """Clean-image estimate implied by the backend's noise prediction."""
    x_t = np.asarray(x_t, dtype=np.float64)
    ab = sched.alpha_bar_at(t)
    eps = handle.predict_noise(x_t, t, sched)
    return (x_t - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab)


__all__ = [
    "AnalyticGaussianDenoiser",
    "DenoiserHandle",
    "ExternalDenoiser",
    "OracleDenoiser",
    "StationaryGaussianPrior",
    "denoise_to_x0",
    "posterior_mean_x0",
    "predict_noise",
    "radial_power",
    "sample_prior",
    "wiener_posterior_mean",
]
