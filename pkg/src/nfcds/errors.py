"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration and
validation problems exit with 2, file and format problems with 3, and
runtime numerical or bridge failures with 4.
"""

from __future__ import annotations


class NfcdsError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(NfcdsError):
    """Invalid configuration value, unknown key, or inconsistent request."""


class ImageFormatError(NfcdsError):
    """Unreadable or malformed image / tensor file."""


class NumericalError(NfcdsError):
    """Numerical abort: non-finite state, solver breakdown, residue blowup."""


class BridgeError(NfcdsError):
    """External denoiser bridge failure: protocol, transport, or payload."""


__all__ = [
    "NfcdsError",
    "ConfigError",
    "ImageFormatError",
    "NumericalError",
    "BridgeError",
]
