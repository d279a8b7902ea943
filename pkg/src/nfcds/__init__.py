"""Diffusion-based zero-shot restoration with frequency-controlled noise.

The package splits into small layers:

* ``schedule``: noise schedules, timestep plans, reverse-step coefficients;
* ``degradation``: linear forward models and measurement synthesis;
* ``denoiser``: noise-prediction backends and the stationary Gaussian prior;
* ``guidance``: data-consistency correction of the running clean estimate;
* ``spectral``: FFT helpers, the soft-threshold frequency mask, band splits;
* ``sampler``: the reverse loops (restore, baseline, generate) and ablations;
* ``metrics``: PSNR, SSIM, and radial spectral error;
* ``bridge``: client for external denoiser servers;
* ``config`` / ``cli`` / ``reporting`` / ``imageio``: the command-line surface.

The names most code needs are re-exported here.
"""

from .bridge import BridgeClient, BridgeConfig
from .degradation import (
    CircularBlur,
    DegradationModel,
    Downsample,
    Identity,
    bicubic_kernel,
    box_kernel,
    gaussian_kernel,
    synthesize_measurement,
)
from .denoiser import (
    AnalyticGaussianDenoiser,
    ExternalDenoiser,
    OracleDenoiser,
    StationaryGaussianPrior,
    denoise_to_x0,
    radial_power,
    sample_prior,
    wiener_posterior_mean,
)
from .errors import (
    BridgeError,
    ConfigError,
    ImageFormatError,
    NfcdsError,
    NumericalError,
)
from .guidance import GuidanceSpec, apply_guidance, ddnrlg_gradient
from .metrics import psnr, radial_spectral_error, ssim
from .sampler import (
    AblationSpec,
    SamplerConfig,
    Trajectory,
    generate,
    nfcds_restore,
    pnp_restore_baseline,
    run_ablation_suite,
)
from .schedule import (
    NoiseSchedule,
    SamplingPlan,
    forward_diffuse,
    make_custom_schedule,
    make_linear_schedule,
    make_plan,
)
from .spectral import (
    FrequencyMaskSpec,
    bypass_mask,
    forward_fft2,
    frequency_grid,
    hard_band_split,
    inverse_fft2_real,
    nfcds_filter,
    soft_threshold_mask,
)

__version__ = "0.1.0"

__all__ = [
    "AblationSpec",
    "AnalyticGaussianDenoiser",
    "BridgeClient",
    "BridgeConfig",
    "BridgeError",
    "CircularBlur",
    "ConfigError",
    "DegradationModel",
    "Downsample",
    "ExternalDenoiser",
    "FrequencyMaskSpec",
    "GuidanceSpec",
    "Identity",
    "ImageFormatError",
    "NfcdsError",
    "NoiseSchedule",
    "NumericalError",
    "OracleDenoiser",
    "SamplerConfig",
    "SamplingPlan",
    "StationaryGaussianPrior",
    "Trajectory",
    "apply_guidance",
    "bicubic_kernel",
    "box_kernel",
    "bypass_mask",
    "ddnrlg_gradient",
    "denoise_to_x0",
    "forward_diffuse",
    "forward_fft2",
    "frequency_grid",
    "gaussian_kernel",
    "generate",
    "hard_band_split",
    "inverse_fft2_real",
    "make_custom_schedule",
    "make_linear_schedule",
    "make_plan",
    "nfcds_filter",
    "nfcds_restore",
    "pnp_restore_baseline",
    "psnr",
    "radial_power",
    "radial_spectral_error",
    "run_ablation_suite",
    "sample_prior",
    "soft_threshold_mask",
    "ssim",
    "synthesize_measurement",
    "wiener_posterior_mean",
    "__version__",
]
