"""Frequency-domain primitives: grids, soft-threshold masks, noise filtering.

Conventions, fixed once for the whole package:

* Forward transforms are unnormalized (``numpy.fft.fft2``); the inverse
  carries the ``1/(H*W)`` factor.  Parseval therefore reads
  ``sum |x|^2 == sum |X|^2 / (H*W)``.
* Spectra are stored DC-centered: the zero-frequency bin sits at index
  ``(H//2, W//2)``.  Radii are measured in frequency-bin units on the
  integer lattice, so a 256x256 grid has Nyquist radius 128.
* Multichannel images are ``(H, W, C)``; transforms act over the two
  leading axes and masks are shared across channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np
from scipy.special import expit

from .errors import ConfigError, NumericalError

# Maximum absolute imaginary residue tolerated when a filtered field is
# cast back to a real image.
IMAG_RESIDUE_TOL = 1e-9


# ---------------------------------------------------------------------------
# frequency grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Radial frequency magnitudes for a DC-centered 2-D spectrum."""

    height: int
    width: int
    radii: np.ndarray


def _centered_freqs(n: int) -> np.ndarray:
    # Integer lattice frequencies in DC-centered order: for even n this is
    # -n/2 .. n/2-1, for odd n it is -(n-1)/2 .. (n-1)/2.
    return np.arange(n, dtype=np.float64) - (n // 2)


@lru_cache(maxsize=64)
def _cached_grid(height: int, width: int) -> FrequencyGrid:
    fu = _centered_freqs(height)[:, None]
    fv = _centered_freqs(width)[None, :]
    radii = np.sqrt(fu * fu + fv * fv)
    radii.setflags(write=False)
    return FrequencyGrid(height=height, width=width, radii=radii)


def frequency_grid(height: int, width: int) -> FrequencyGrid:
    """Return the (cached) DC-centered radial grid for one spatial shape."""
    if height < 2 or width < 2:
        raise ConfigError(f"grid dimensions must be >= 2, got {height}x{width}")
    return _cached_grid(int(height), int(width))


# ---------------------------------------------------------------------------
# mask specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyMaskSpec:
    """Soft-threshold mask parameters.

    Parameters
    ----------
    r_thresh : float
        Cutoff radius in frequency-bin units.  The mask crosses 1/2
        exactly at this radius.
    alpha : float
        Sharpness of the sigmoid transition; must be positive.
    per_step : mapping, optional
        Timestep-indexed cutoff radii.  When given, ``radius_at(t)``
        looks the timestep up here and falls back to ``r_thresh``.
    bypass : bool
        When set, the mask is identically 1 and filtering is a no-op
        that returns its input unchanged.
    renormalize : bool
        When set, filtered fields are rescaled per channel to preserve
        their original L2 norm.  Off by default.
    """

    r_thresh: float = 0.0
    alpha: float = 1.0
    per_step: Optional[Mapping[int, float]] = None
    bypass: bool = False
    renormalize: bool = False

    def __post_init__(self) -> None:
        if self.bypass:
            return
        if not np.isfinite(self.r_thresh) or self.r_thresh < 0:
            raise ConfigError(f"r_thresh must be finite and >= 0, got {self.r_thresh}")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ConfigError(f"alpha must be finite and > 0, got {self.alpha}")
        if self.per_step is not None:
            for t, r in self.per_step.items():
                if t < 0 or not np.isfinite(r) or r < 0:
                    raise ConfigError(f"invalid per-step cutoff ({t}: {r})")

    def radius_at(self, t: int) -> float:
        if self.per_step is not None and t in self.per_step:
            return float(self.per_step[t])
        return float(self.r_thresh)


def bypass_mask() -> FrequencyMaskSpec:
    """Mask specification whose filter is the identity."""
    return FrequencyMaskSpec(bypass=True)


def soft_threshold_mask(grid: FrequencyGrid, spec: FrequencyMaskSpec, t: int) -> np.ndarray:
    """Evaluate the sigmoid high-pass mask on a grid.

    Returns ``1 / (1 + exp(-alpha * (||w|| - r(t))))`` per frequency bin,
    which is 1/2 exactly at the cutoff radius and increases with radius.
    """
    if spec.bypass:
        return np.ones_like(grid.radii)
    return expit(spec.alpha * (grid.radii - spec.radius_at(t)))


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralField:
    """DC-centered complex spectrum together with its frequency grid."""

    coefficients: np.ndarray
    grid: FrequencyGrid


def _check_spatial(x: np.ndarray) -> None:
    if x.ndim not in (2, 3):
        raise ConfigError(f"expected a (H, W) or (H, W, C) array, got shape {x.shape}")
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise ConfigError(f"spatial dimensions must be >= 2, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite values in spatial field")


def forward_fft2(image: np.ndarray) -> SpectralField:
    """Unnormalized 2-D DFT over the leading two axes, DC-centered."""
    image = np.asarray(image)
    _check_spatial(image)
    coeffs = np.fft.fftshift(np.fft.fft2(image, axes=(0, 1)), axes=(0, 1))
    return SpectralField(coefficients=coeffs, grid=frequency_grid(*image.shape[:2]))


def inverse_fft2(field: SpectralField) -> np.ndarray:
    """Inverse of :func:`forward_fft2`; complex output, 1/(H*W) normalized."""
    return np.fft.ifft2(np.fft.ifftshift(field.coefficients, axes=(0, 1)), axes=(0, 1))


def inverse_fft2_real(field: SpectralField) -> np.ndarray:
    """Inverse transform asserted to land on a real image.

    Raises
    ------
    NumericalError
        If the maximum absolute imaginary residue exceeds 1e-9; a
        Hermitian-symmetric spectrum never trips this.
    """
    out = inverse_fft2(field)
    residue = float(np.max(np.abs(out.imag))) if out.size else 0.0
    if residue > IMAG_RESIDUE_TOL:
        raise NumericalError(
            f"imaginary residue {residue:.3e} exceeds {IMAG_RESIDUE_TOL:.1e}"
        )
    return np.ascontiguousarray(out.real)


def _broadcast_mask(mask: np.ndarray, x: np.ndarray) -> np.ndarray:
    return mask if x.ndim == 2 else mask[:, :, None]


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------


def nfcds_filter(noise: np.ndarray, spec: FrequencyMaskSpec, t: int) -> np.ndarray:
    """Apply the soft-threshold frequency mask to a spatial field.

    Computes ``ifft2(fft2(noise) * M(t))`` and returns the real part.
    A bypass spec short-circuits and returns the input unchanged, so the
    unfiltered baseline is reproduced bit-exactly.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if spec.bypass:
        return noise.copy()
    field = forward_fft2(noise)
    mask = soft_threshold_mask(field.grid, spec, t)
    filtered = SpectralField(
        coefficients=field.coefficients * _broadcast_mask(mask, noise),
        grid=field.grid,
    )
    out = inverse_fft2_real(filtered)
    if spec.renormalize:
        out = _match_l2(out, noise)
    return out


def _match_l2(out: np.ndarray, ref: np.ndarray) -> np.ndarray:
    # Per-channel rescale so ||out|| == ||ref||; zero-norm channels pass through.
    if out.ndim == 2:
        norm_out = np.linalg.norm(out)
        norm_ref = np.linalg.norm(ref)
        return out * (norm_ref / norm_out) if norm_out > 0 else out
    scaled = out.copy()
    for c in range(out.shape[2]):
        norm_out = np.linalg.norm(out[:, :, c])
        if norm_out > 0:
            scaled[:, :, c] *= np.linalg.norm(ref[:, :, c]) / norm_out
    return scaled


def band_split(
    image: np.ndarray, spec: FrequencyMaskSpec, t: int
) -> tuple[np.ndarray, np.ndarray]:
    """Split an image into complementary bands: ``low + high == image``.

    The high band is the mask-filtered image; the low band is the exact
    remainder, so reassembly is lossless by construction.
    """
    image = np.asarray(image, dtype=np.float64)
    high = nfcds_filter(image, spec, t)
    low = image - high
    return low, high


def _check_cutoff(cutoff: float) -> float:
    cutoff = float(cutoff)
    if not np.isfinite(cutoff) or cutoff <= 0:
        raise ConfigError(f"band cutoff must be a finite positive radius, got {cutoff}")
    return cutoff


def suppress_band(field: np.ndarray, cutoff: float, band: str) -> np.ndarray:
    """Zero every Fourier coefficient in the named band.

    ``band="low"`` removes radii strictly below the cutoff and keeps the
    rest; ``band="high"`` removes radii at or above it. The kept
    coefficients pass through untouched, so the retained band is exact.
    """
    cutoff = _check_cutoff(cutoff)
    if band not in ("low", "high"):
        raise ConfigError(f"band must be 'low' or 'high', got {band!r}")
    field = np.asarray(field, dtype=np.float64)
    spectral = forward_fft2(field)
    low_bins = spectral.grid.radii < cutoff
    keep = ~low_bins if band == "low" else low_bins
    kept = SpectralField(
        coefficients=spectral.coefficients * _broadcast_mask(keep.astype(np.float64), field),
        grid=spectral.grid,
    )
    return inverse_fft2_real(kept)


def hard_band_split(image: np.ndarray, cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    """Binary partition at a radius: ``low + high == image`` exactly.

    The low band holds radii strictly below the cutoff; the high band is
    the exact remainder.
    """
    image = np.asarray(image, dtype=np.float64)
    low = suppress_band(image, cutoff, "high")
    return low, image - low


__all__ = [
    "IMAG_RESIDUE_TOL",
    "FrequencyGrid",
    "FrequencyMaskSpec",
    "SpectralField",
    "band_split",
    "bypass_mask",
    "forward_fft2",
    "frequency_grid",
    "hard_band_split",
    "inverse_fft2",
    "inverse_fft2_real",
    "nfcds_filter",
    "soft_threshold_mask",
    "suppress_band",
]
