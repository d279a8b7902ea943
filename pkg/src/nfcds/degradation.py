"""Measurement operators: identity, periodic blur, antialiased downsampling.

All operators act channel-wise on ``(H, W)`` or ``(H, W, C)`` arrays and
use periodic (circular) boundary handling, so blur and its adjoint are
exact transposes of each other.  Dense materialization is available for
oracle-style verification at small sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError

# hard ceiling for dense materialization: n = h * w image pixels
DENSE_LIMIT = 4096

KERNEL_SUM_TOL = 1e-9


def _validate_kernel(kernel: np.ndarray, *, name: str) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] < 1 or kernel.shape[1] < 1:
        raise ConfigError(f"{name} must be a non-empty 2-D array")
    if not np.all(np.isfinite(kernel)):
        raise ConfigError(f"{name} contains non-finite values")
    total = float(kernel.sum())
    if abs(total - 1.0) > KERNEL_SUM_TOL:
        raise ConfigError(f"{name} must sum to 1, got {total!r}")
    kernel = kernel.copy()
    kernel.setflags(write=False)
    return kernel


@dataclass(frozen=True, eq=False)
class Identity:
    pass


@dataclass(frozen=True, eq=False)
class CircularBlur:
    kernel: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "kernel", _validate_kernel(self.kernel, name="blur kernel"))


@dataclass(frozen=True, eq=False)
class Downsample:
    factor: int
    antialias_kernel: np.ndarray

    def __post_init__(self) -> None:
        if int(self.factor) != self.factor or self.factor < 1:
            raise ConfigError(f"downsampling factor must be a positive integer, got {self.factor}")
        object.__setattr__(self, "factor", int(self.factor))
        object.__setattr__(
            self,
            "antialias_kernel",
            _validate_kernel(self.antialias_kernel, name="antialias kernel"),
        )


Operator = Union[Identity, CircularBlur, Downsample]


@dataclass(frozen=True, eq=False)
class DegradationModel:
    """Forward model ``y = A x + sigma_y * n`` with white Gaussian noise."""

    operator: Operator
    sigma_y: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.sigma_y) or self.sigma_y < 0:
            raise ConfigError(f"sigma_y must be finite and >= 0, got {self.sigma_y}")


# ---------------------------------------------------------------------------
# kernel factories
# ---------------------------------------------------------------------------


def box_kernel(factor: int) -> np.ndarray:
    """Flat averaging kernel matching one downsampling cell."""
    if factor < 1:
        raise ConfigError(f"factor must be >= 1, got {factor}")
    return np.full((factor, factor), 1.0 / (factor * factor))


def _keys_cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    ax = np.abs(x)
    out = np.zeros_like(ax)
    near = ax <= 1.0
    far = (ax > 1.0) & (ax < 2.0)
    out[near] = (a + 2.0) * ax[near] ** 3 - (a + 3.0) * ax[near] ** 2 + 1.0
    out[far] = a * ax[far] ** 3 - 5.0 * a * ax[far] ** 2 + 8.0 * a * ax[far] - 4.0 * a
    return out


def bicubic_kernel(factor: int) -> np.ndarray:
    """Separable antialiasing kernel: the cubic-convolution profile
    stretched by the downsampling factor and normalized to unit sum."""
    if factor < 1:
        raise ConfigError(f"factor must be >= 1, got {factor}")
    taps = 4 * factor
    centre = (taps - 1) / 2.0
    xs = (np.arange(taps) - centre) / factor
    w = _keys_cubic(xs)
    w /= w.sum()
    return np.outer(w, w)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Truncated isotropic Gaussian, normalized to unit sum."""
    if size < 1 or size % 2 == 0:
        raise ConfigError(f"kernel size must be a positive odd integer, got {size}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    xs = np.arange(size) - size // 2
    w = np.exp(-0.5 * (xs / sigma) ** 2)
    k = np.outer(w, w)
    return k / k.sum()


# ---------------------------------------------------------------------------
# application
# ---------------------------------------------------------------------------


def _check_image(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ConfigError(f"expected (H, W) or (H, W, C), got shape {x.shape}")
    return x


def _otf(kernel: np.ndarray, h: int, w: int) -> np.ndarray:
    kh, kw = kernel.shape
    if kh > h or kw > w:
        raise ConfigError(f"kernel {kernel.shape} larger than image ({h}, {w})")
    pad = np.zeros((h, w))
    pad[:kh, :kw] = kernel
    # anchor the kernel center at the origin so the transfer function has
    # (near) zero phase for symmetric kernels
    pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(pad)


def kernel_transfer(kernel: np.ndarray, h: int, w: int) -> np.ndarray:
    """Frequency response of circular convolution with ``kernel`` at (h, w)."""
    return _otf(np.asarray(kernel, dtype=np.float64), h, w)


def _filter_with(x: np.ndarray, transfer: np.ndarray) -> np.ndarray:
    spec = np.fft.fft2(x, axes=(0, 1))
    t = transfer if x.ndim == 2 else transfer[:, :, None]
    return np.fft.ifft2(spec * t, axes=(0, 1)).real


def measurement_shape(op: Operator, h: int, w: int) -> tuple[int, int]:
    """Spatial shape of ``A x`` for an ``(h, w)`` image."""
    if isinstance(op, Downsample):
        if h % op.factor or w % op.factor:
            raise ConfigError(
                f"image shape ({h}, {w}) not divisible by factor {op.factor}"
            )
        return h // op.factor, w // op.factor
    return h, w


def apply(model: DegradationModel, x: np.ndarray) -> np.ndarray:
    """Forward operator ``A x`` (noiseless)."""
    x = _check_image(x)
    op = model.operator
    if isinstance(op, Identity):
        return x.copy()
    if isinstance(op, CircularBlur):
        return _filter_with(x, _otf(op.kernel, *x.shape[:2]))
    if isinstance(op, Downsample):
        measurement_shape(op, *x.shape[:2])
        blurred = _filter_with(x, _otf(op.antialias_kernel, *x.shape[:2]))
        return np.ascontiguousarray(blurred[:: op.factor, :: op.factor])
    raise ConfigError(f"unknown operator {op!r}")


def adjoint(model: DegradationModel, z: np.ndarray, image_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Exact transpose ``A^T z`` of :func:`apply`.

    For downsampling the image-space shape cannot be inferred from the
    measurement alone, so it must be passed explicitly.
    """
    z = _check_image(z)
    op = model.operator
    if isinstance(op, Identity):
        return z.copy()
    if isinstance(op, CircularBlur):
        return _filter_with(z, np.conj(_otf(op.kernel, *z.shape[:2])))
    if isinstance(op, Downsample):
        if image_shape is None:
            h, w = z.shape[0] * op.factor, z.shape[1] * op.factor
        else:
            h, w = image_shape
            if (h // op.factor, w // op.factor) != z.shape[:2]:
                raise ConfigError(
                    f"measurement shape {z.shape[:2]} inconsistent with image "
                    f"shape ({h}, {w}) at factor {op.factor}"
                )
        up_shape = (h, w) if z.ndim == 2 else (h, w, z.shape[2])
        up = np.zeros(up_shape)
        up[:: op.factor, :: op.factor] = z
        return _filter_with(up, np.conj(_otf(op.antialias_kernel, h, w)))
    raise ConfigError(f"unknown operator {op!r}")


def materialize_dense(model: DegradationModel, h: int, w: int) -> np.ndarray:
    """Column-by-column dense matrix of the per-channel operator.

    Guarded to ``h * w <= 4096`` pixels; intended for verification, not
    production use.
    """
    n = h * w
    if n > DENSE_LIMIT:
        raise ConfigError(f"dense materialization capped at {DENSE_LIMIT} pixels, got {n}")
    mh, mw = measurement_shape(model.operator, h, w)
    m = mh * mw
    dense = np.zeros((m, n))
    basis = np.zeros((h, w))
    for j in range(n):
        basis.flat[j] = 1.0
        dense[:, j] = apply(model, basis).ravel()
        basis.flat[j] = 0.0
    return dense


def synthesize_measurement(model: DegradationModel, x0: np.ndarray, seed: int) -> np.ndarray:
    """Draw ``y = A x0 + sigma_y * n`` with a counter-based generator.

    The same seed always produces a bit-identical measurement; a zero
    noise level returns ``A x0`` exactly, with no generator draw at all.
    """
    y = apply(model, x0)
    if model.sigma_y == 0.0:
        return y
    rng = np.random.Generator(np.random.Philox(seed))
    return y + model.sigma_y * rng.standard_normal(y.shape)


__all__ = [
    "DENSE_LIMIT",
    "CircularBlur",
    "DegradationModel",
    "Downsample",
    "Identity",
    "Operator",
    "adjoint",
    "apply",
    "bicubic_kernel",
    "box_kernel",
    "gaussian_kernel",
    "kernel_transfer",
    "materialize_dense",
    "measurement_shape",
    "synthesize_measurement",
]
