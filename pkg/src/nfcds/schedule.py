"""Noise schedules, timestep subsequences, and step coefficients.

Timesteps are 0-based indices into arrays of length ``T``; index ``t``
carries the cumulative product ``alpha_bar[t]`` of ``1 - beta`` up to and
including that step.  The boundary before the first step is represented
by ``alpha_bar == 1``: the final reverse step maps onto it and injects no
noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    kind: str
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return int(self.beta.shape[0])

    def alpha_bar_at(self, t: int) -> float:
        if not 0 <= t < self.T:
            raise ConfigError(f"timestep {t} outside schedule of length {self.T}")
        return float(self.alpha_bar[t])


def _build_schedule(kind: str, beta: np.ndarray) -> NoiseSchedule:
    if beta.ndim != 1 or beta.shape[0] < 1:
        raise ConfigError("beta table must be a non-empty 1-D array")
    if not np.all(np.isfinite(beta)) or np.any(beta <= 0) or np.any(beta >= 1):
        raise ConfigError("beta values must lie strictly inside (0, 1)")
    alpha = 1.0 - beta
    # accumulate the product in extended precision before rounding back,
    # so long schedules keep full float64 accuracy in the tail
    alpha_bar = np.cumprod(alpha.astype(np.longdouble)).astype(np.float64)
    if np.any(np.diff(alpha_bar) >= 0):
        raise ConfigError("alpha_bar must be strictly decreasing")
    beta = beta.copy()
    beta.setflags(write=False)
    alpha.setflags(write=False)
    alpha_bar.setflags(write=False)
    return NoiseSchedule(kind=kind, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def make_linear_schedule(
    T: int, beta_start: float = 1e-4, beta_end: float = 0.02
) -> NoiseSchedule:
    """Linearly interpolated beta table over ``T`` steps (inclusive ends)."""
    if T < 1:
        raise ConfigError(f"schedule length must be >= 1, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    return _build_schedule("linear", np.linspace(beta_start, beta_end, T))


def make_custom_schedule(betas) -> NoiseSchedule:
    """Schedule from an explicit beta table."""
    return _build_schedule("custom", np.asarray(betas, dtype=np.float64))


def forward_diffuse(
    x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    """Noising step: ``sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps``."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ConfigError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    ab = sched.alpha_bar_at(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


# ---------------------------------------------------------------------------
# sampling plans
# ---------------------------------------------------------------------------

# rule signature: (alpha_bar_t, alpha_bar_prev) -> sigma_t
SigmaRule = Callable[[float, float], float]


@dataclass(frozen=True)
class SamplingPlan:
    """Reverse-time visiting order plus per-step noise-mixing knobs."""

    steps: tuple[int, ...]
    zeta: float = 1.0
    eta: float = 0.0
    sigma_rule: Optional[SigmaRule] = None

    def __post_init__(self) -> None:
        if len(self.steps) < 1:
            raise ConfigError("a sampling plan needs at least one step")
        if any(s < 0 for s in self.steps):
            raise ConfigError("timesteps must be non-negative")
        if any(a <= b for a, b in zip(self.steps, self.steps[1:])):
            raise ConfigError("timesteps must be strictly decreasing")
        if not 0.0 <= self.zeta <= 1.0:
            raise ConfigError(f"zeta must lie in [0, 1], got {self.zeta}")
        if self.eta < 0.0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")

    @property
    def nfe(self) -> int:
        return len(self.steps)


def make_subsequence(T: int, nfe: int, strategy: str = "uniform") -> list[int]:
    """Strictly decreasing timestep subsequence starting at ``T - 1``.

    ``uniform`` strides by ``T // nfe``; ``quadratic`` spaces the visited
    steps quadratically so late (small-``t``) steps are sampled densely.
    """
    if not 1 <= nfe <= T:
        raise ConfigError(f"need 1 <= nfe <= T, got nfe={nfe}, T={T}")
    if strategy == "uniform":
        stride = T // nfe
        return list(range(T - 1, -1, -stride))[:nfe]
    if strategy == "quadratic":
        if nfe == 1:
            return [T - 1]
        asc = np.round(np.linspace(0.0, 1.0, nfe) ** 2 * (T - 1)).astype(int)
        for i in range(1, nfe):
            asc[i] = max(asc[i], asc[i - 1] + 1)
        asc[-1] = min(int(asc[-1]), T - 1)
        for i in range(nfe - 2, -1, -1):
            asc[i] = min(int(asc[i]), int(asc[i + 1]) - 1)
        return [int(s) for s in asc[::-1]]
    raise ConfigError(f"unknown subsequence strategy {strategy!r}")


def make_plan(
    sched: NoiseSchedule,
    nfe: int,
    strategy: str = "uniform",
    zeta: float = 1.0,
    eta: float = 0.0,
    sigma_rule: Optional[SigmaRule] = None,
) -> SamplingPlan:
    steps = make_subsequence(sched.T, nfe, strategy)
    return SamplingPlan(steps=tuple(steps), zeta=zeta, eta=eta, sigma_rule=sigma_rule)


def alpha_bar_prev(plan: SamplingPlan, sched: NoiseSchedule, step_index: int) -> float:
    """``alpha_bar`` of the next planned step, or 1.0 past the final one."""
    if not 0 <= step_index < plan.nfe:
        raise ConfigError(f"step index {step_index} outside plan of length {plan.nfe}")
    if step_index + 1 < plan.nfe:
        return sched.alpha_bar_at(plan.steps[step_index + 1])
    return 1.0


def ddim_sigma(eta: float, ab_t: float, ab_prev: float) -> float:
    """Stochasticity level interpolating deterministic (0) to ancestral (1)."""
    if eta == 0.0 or ab_prev >= 1.0:
        return 0.0
    return (
        eta
        * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t))
        * math.sqrt(1.0 - ab_t / ab_prev)
    )


def ddim_coefficients(
    plan: SamplingPlan, sched: NoiseSchedule, step_index: int
) -> tuple[float, float, float]:
    """Per-step update coefficients ``(sqrt(ab_prev), sigma_bar, sigma)``.

    ``sigma_bar = sqrt(1 - ab_prev - sigma^2)`` scales the predicted noise
    and ``sigma`` the fresh draw; at the final step both are forced to 0.
    """
    t = plan.steps[step_index]
    ab_t = sched.alpha_bar_at(t)
    ab_prev = alpha_bar_prev(plan, sched, step_index)
    if ab_prev >= 1.0:
        sigma = 0.0
    elif plan.sigma_rule is not None:
        sigma = float(plan.sigma_rule(ab_t, ab_prev))
    else:
        sigma = ddim_sigma(plan.eta, ab_t, ab_prev)
    if sigma < 0.0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    slack = 1.0 - ab_prev - sigma * sigma
    if slack < -1e-12:
        raise ConfigError(
            f"sigma^2 = {sigma * sigma:.6g} exceeds 1 - alpha_bar_prev = "
            f"{1.0 - ab_prev:.6g} at step {t}"
        )
    return math.sqrt(ab_prev), math.sqrt(max(slack, 0.0)), sigma


__all__ = [
    "NoiseSchedule",
    "SamplingPlan",
    "SigmaRule",
    "alpha_bar_prev",
    "ddim_coefficients",
    "ddim_sigma",
    "forward_diffuse",
    "make_custom_schedule",
    "make_linear_schedule",
    "make_plan",
    "make_subsequence",
]
