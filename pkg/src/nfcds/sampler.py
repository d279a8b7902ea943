"""Reverse-process engines.

One module drives every sampling mode: guided restoration with
frequency-controlled noise injection, the unfiltered plug-and-play
baseline, unconditional generation, and the hard band ablations. All
modes share a single loop so that configurations differing only in how
the injected noise is shaped consume identical random draws and stay
sample-paired.

Per step the loop evaluates the denoiser once, forms the clean estimate,
applies measurement guidance to it, blends predicted and fresh noise,
shapes the blend, and renoises:

    x_{t-1} = sqrt(ab_prev) * x_hat + sqrt(1 - ab_prev) * shape(eps_bar)

The final step has ab_prev == 1 and returns the guided estimate with no
noise injection.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .degradation import DegradationModel, Downsample, apply
from .denoiser import DenoiserHandle, predict_noise
from .errors import ConfigError, NumericalError
from .guidance import GuidanceSpec, apply_guidance
from .metrics import psnr, ssim
from .schedule import NoiseSchedule, SamplingPlan, alpha_bar_prev
from .spectral import (
    FrequencyMaskSpec,
    band_split,
    bypass_mask,
    hard_band_split,
    nfcds_filter,
    suppress_band,
)

ABLATION_MODES = ("zero_low", "zero_high", "cut_low_after", "cut_high_after")

TRAJECTORY_FIELDS = (
    "step",
    "t",
    "residual_l2",
    "low_band_err",
    "high_band_err",
    "noise_low_energy",
    "noise_high_energy",
)


@dataclass(frozen=True)
class AblationSpec:
    """Hard binary reshaping of the injected noise.

    ``zero_low`` / ``zero_high`` remove the named band at every step.
    ``cut_low_after`` / ``cut_high_after`` leave the noise untouched for
    step indices below ``step`` and remove the band from that index on.
    The cutoff is a radius on the integer frequency lattice; the low band
    is strictly below it.
    """

    mode: str
    cutoff: float
    step: Optional[int] = None

    def __post_init__(self) -> None:
        if self.mode not in ABLATION_MODES:
            raise ConfigError(f"unknown ablation mode {self.mode!r}; expected one of {ABLATION_MODES}")
        if not math.isfinite(self.cutoff) or self.cutoff <= 0:
            raise ConfigError(f"ablation cutoff must be a finite positive radius, got {self.cutoff}")
        if self.mode.startswith("cut_"):
            if self.step is None or self.step < 0:
                raise ConfigError(f"ablation mode {self.mode!r} needs a step index >= 0, got {self.step}")
        elif self.step is not None:
            raise ConfigError(f"ablation mode {self.mode!r} takes no step index")

    def shape_noise(self, noise: np.ndarray, step_index: int) -> np.ndarray:
        if self.mode == "zero_low":
            return suppress_band(noise, self.cutoff, "low")
        if self.mode == "zero_high":
            return suppress_band(noise, self.cutoff, "high")
        if step_index < self.step:
            return noise
        band = "low" if self.mode == "cut_low_after" else "high"
        return suppress_band(noise, self.cutoff, band)


@dataclass(eq=False)
class SamplerConfig:
    """Everything one reverse run needs besides the data and the schedule.

    ``mask`` and ``ablation`` are mutually exclusive controls on the
    injected noise: the soft mask needs a bypass-free spec and no
    ablation, an ablation needs a bypass mask. ``filter_fresh_only``
    restricts the soft mask to the fresh component of the blend and
    leaves the predicted component untouched.

    ``shape`` is required for generation (no measurement to infer it
    from). ``reference`` is an optional ground-truth image; when present
    the trajectory records band errors of the running clean estimate
    against it. ``band_radius`` forces a fixed hard split for trajectory
    summaries so runs with different noise controls stay comparable.
    """

    plan: SamplingPlan
    mask: FrequencyMaskSpec
    guidance: Optional[GuidanceSpec] = None
    ablation: Optional[AblationSpec] = None
    seed: int = 0
    shape: Optional[tuple] = None
    record_trajectory: bool = False
    record_full: bool = False
    filter_fresh_only: bool = False
    band_radius: Optional[float] = None
    reference: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.ablation is not None and not self.mask.bypass:
            raise ConfigError("ablation and frequency mask are mutually exclusive; use a bypass mask")
        if self.filter_fresh_only and self.mask.bypass:
            raise ConfigError("filter_fresh_only needs an active frequency mask")
        if self.record_full and not self.record_trajectory:
            raise ConfigError("record_full requires record_trajectory")
        if self.shape is not None:
            shape = tuple(int(n) for n in self.shape)
            if len(shape) not in (2, 3) or any(n < 1 for n in shape):
                raise ConfigError(f"shape must be (H, W) or (H, W, C) of positive sizes, got {self.shape}")
            self.shape = shape
        if self.band_radius is not None:
            if not math.isfinite(self.band_radius) or self.band_radius <= 0:
                raise ConfigError(f"band_radius must be a finite positive radius, got {self.band_radius}")
        if self.reference is not None:
            self.reference = np.asarray(self.reference, dtype=np.float64)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-step summary; full tensors are attached only under record_full."""

    step: int
    t: int
    residual_l2: float
    low_band_err: float
    high_band_err: float
    noise_low_energy: float
    noise_high_energy: float
    estimate: Optional[np.ndarray] = None
    state: Optional[np.ndarray] = None
    eps_bar: Optional[np.ndarray] = None
    injected: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Trajectory:
    records: tuple

    def rows(self) -> list:
        """Summary rows in TRAJECTORY_FIELDS order, one per step."""
        return [
            tuple(getattr(rec, name) for name in TRAJECTORY_FIELDS)
            for rec in self.records
        ]

    def __len__(self) -> int:
        return len(self.records)


def _restoration_shape(model: DegradationModel, y: np.ndarray) -> tuple:
    if isinstance(model.operator, Downsample):
        f = model.operator.factor
        return (y.shape[0] * f, y.shape[1] * f) + y.shape[2:]
    return y.shape


def _band_splitter(cfg: SamplerConfig, t: int) -> Optional[Callable]:
    if cfg.band_radius is not None:
        return lambda x: hard_band_split(x, cfg.band_radius)
    if cfg.ablation is not None:
        return lambda x: hard_band_split(x, cfg.ablation.cutoff)
    if not cfg.mask.bypass:
        return lambda x: band_split(x, cfg.mask, t)
    return None


def _shape_injection(
    eps_pred: np.ndarray,
    eps_fresh: np.ndarray,
    eps_bar: np.ndarray,
    cfg: SamplerConfig,
    step_index: int,
    t: int,
) -> np.ndarray:
    if cfg.ablation is not None:
        return cfg.ablation.shape_noise(eps_bar, step_index)
    if cfg.filter_fresh_only:
        zeta = cfg.plan.zeta
        return math.sqrt(1.0 - zeta) * eps_pred + math.sqrt(zeta) * nfcds_filter(
            eps_fresh, cfg.mask, t
        )
    return nfcds_filter(eps_bar, cfg.mask, t)


def _make_record(
    cfg: SamplerConfig,
    model: Optional[DegradationModel],
    y: Optional[np.ndarray],
    step_index: int,
    t: int,
    estimate: np.ndarray,
    state: np.ndarray,
    eps_bar: Optional[np.ndarray],
    injected: Optional[np.ndarray],
) -> TrajectoryRecord:
    residual = math.nan
    if y is not None and model is not None:
        residual = float(np.linalg.norm(y - apply(model, estimate)))

    low_err = high_err = math.nan
    noise_low = noise_high = math.nan
    split = _band_splitter(cfg, t)
    if split is not None:
        if cfg.reference is not None:
            low_part, high_part = split(estimate - cfg.reference)
            low_err = float(np.linalg.norm(low_part))
            high_err = float(np.linalg.norm(high_part))
        if injected is not None:
            low_part, high_part = split(injected)
            noise_low = float(np.sum(low_part**2))
            noise_high = float(np.sum(high_part**2))

    return TrajectoryRecord(
        step=step_index,
        t=t,
        residual_l2=residual,
        low_band_err=low_err,
        high_band_err=high_err,
        noise_low_energy=noise_low,
        noise_high_energy=noise_high,
        estimate=estimate.copy() if cfg.record_full else None,
        state=state.copy() if cfg.record_full else None,
        eps_bar=eps_bar.copy() if cfg.record_full and eps_bar is not None else None,
        injected=injected.copy() if cfg.record_full and injected is not None else None,
    )


def _reverse_loop(
    denoiser: DenoiserHandle,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
    model: Optional[DegradationModel],
    y: Optional[np.ndarray],
    shape: tuple,
) -> tuple:
    if cfg.reference is not None and cfg.reference.shape != shape:
        raise ConfigError(f"reference shape {cfg.reference.shape} does not match state shape {shape}")

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    x = rng.standard_normal(shape)
    steps = cfg.plan.steps
    zeta = cfg.plan.zeta
    records = []

    for i, t in enumerate(steps):
        eps_pred = predict_noise(denoiser, x, t, sched)
        ab_t = sched.alpha_bar_at(t)
        x0t = (x - math.sqrt(1.0 - ab_t) * eps_pred) / math.sqrt(ab_t)
        if cfg.guidance is not None:
            x_hat = apply_guidance(x0t, y, cfg.guidance, model, sched, t)
        else:
            x_hat = x0t

        final = i + 1 == len(steps)
        eps_bar = None
        injected = None
        if final:
            x_next = x_hat
        else:
            # The fresh draw happens at every non-final step regardless of
            # zeta or the noise control, so runs differing only in those
            # knobs consume identical random streams.
            eps_fresh = rng.standard_normal(shape)
            eps_bar = math.sqrt(1.0 - zeta) * eps_pred + math.sqrt(zeta) * eps_fresh
            injected = _shape_injection(eps_pred, eps_fresh, eps_bar, cfg, i, t)
            ab_prev = alpha_bar_prev(cfg.plan, sched, i)
            x_next = math.sqrt(ab_prev) * x_hat + math.sqrt(1.0 - ab_prev) * injected

        if not np.all(np.isfinite(x_next)):
            raise NumericalError(f"non-finite sampler state at step {i} (t={t})")
        if cfg.record_trajectory:
            records.append(
                _make_record(cfg, model, y, i, t, x_hat, x_next, eps_bar, injected)
            )
        x = x_next

    return x, Trajectory(records=tuple(records))


def nfcds_restore(
    y: np.ndarray,
    model: DegradationModel,
    denoiser: DenoiserHandle,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
) -> tuple:
    """Guided reverse process with frequency-controlled noise injection.

    Returns ``(x0, trajectory)``; the trajectory is empty unless
    recording is enabled in the config.
    """
    if cfg.guidance is None:
        raise ConfigError("restoration requires a guidance spec; set mu=0 to disable the data term")
    y = np.asarray(y, dtype=np.float64)
    shape = _restoration_shape(model, y)
    if cfg.shape is not None and cfg.shape != shape:
        raise ConfigError(f"configured shape {cfg.shape} conflicts with measurement-implied {shape}")
    return _reverse_loop(denoiser, cfg, sched, model, y, shape)


def pnp_restore_baseline(
    y: np.ndarray,
    model: DegradationModel,
    denoiser: DenoiserHandle,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
) -> tuple:
    """Same loop with unfiltered noise: the plain plug-and-play baseline.

    Implemented by swapping the mask for a bypass, so for a fixed seed it
    is bit-identical to `nfcds_restore` under a bypass mask.
    """
    base = dataclasses.replace(cfg, mask=bypass_mask(), ablation=None, filter_fresh_only=False)
    return nfcds_restore(y, model, denoiser, base, sched)


def generate(
    denoiser: DenoiserHandle,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
) -> tuple:
    """Unconditional reverse process; requires guidance=None and a shape."""
    if cfg.guidance is not None:
        raise ConfigError("generation mode requires guidance = None")
    if cfg.shape is None:
        raise ConfigError("generation mode requires an explicit shape")
    return _reverse_loop(denoiser, cfg, sched, None, None, cfg.shape)


@dataclass(frozen=True)
class AblationEntry:
    name: str
    output: np.ndarray
    trajectory: Trajectory
    metrics: Mapping


@dataclass(frozen=True)
class AblationReport:
    entries: tuple

    def summary_rows(self) -> list:
        """Long-format (config, metric, value) rows, one per metric."""
        rows = []
        for entry in self.entries:
            for metric in sorted(entry.metrics):
                rows.append((entry.name, metric, entry.metrics[metric]))
        return rows


def _entry_metrics(
    output: np.ndarray,
    trajectory: Trajectory,
    reference: Optional[np.ndarray],
) -> dict:
    metrics: dict = {}
    if trajectory.records:
        last = trajectory.records[-1]
        metrics["final_residual_l2"] = last.residual_l2
        metrics["final_low_band_err"] = last.low_band_err
        metrics["final_high_band_err"] = last.high_band_err
    if reference is not None:
        peak = float(np.max(np.abs(reference), initial=1.0))
        metrics["psnr"] = psnr(reference, output, peak=peak)
        if min(output.shape[0], output.shape[1]) >= 11:
            metrics["ssim"] = ssim(reference, output, peak=peak)
    return metrics


def run_ablation_suite(
    denoiser: DenoiserHandle,
    configs: Mapping,
    sched: NoiseSchedule,
    model: Optional[DegradationModel] = None,
    y: Optional[np.ndarray] = None,
    reference: Optional[np.ndarray] = None,
) -> AblationReport:
    """Run a named grid of configs and collect trajectories plus metrics.

    Configs with a guidance spec run as restorations against ``y`` and
    ``model``; configs without one run as generations. Trajectory
    recording is forced on for every entry.
    """
    entries = []
    for name, cfg in configs.items():
        ref = cfg.reference if cfg.reference is not None else reference
        run_cfg = dataclasses.replace(cfg, record_trajectory=True, reference=ref)
        if run_cfg.guidance is None:
            output, trajectory = generate(denoiser, run_cfg, sched)
        else:
            output, trajectory = nfcds_restore(y, model, denoiser, run_cfg, sched)
        entries.append(
            AblationEntry(
                name=str(name),
                output=output,
                trajectory=trajectory,
                metrics=_entry_metrics(output, trajectory, run_cfg.reference),
            )
        )
    return AblationReport(entries=tuple(entries))


__all__ = [
    "ABLATION_MODES",
    "TRAJECTORY_FIELDS",
    "AblationEntry",
    "AblationReport",
    "AblationSpec",
    "SamplerConfig",
    "Trajectory",
    "TrajectoryRecord",
    "generate",
    "nfcds_restore",
    "pnp_restore_baseline",
    "run_ablation_suite",
]
