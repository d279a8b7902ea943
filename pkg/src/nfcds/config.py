"""Flat run configuration.

The on-disk format is one `section.key = value` assignment per line,
with ``#`` starting a comment and blank lines ignored. The same parser
reads config files, report files (whose metric lines are comments), and
``--set`` overrides, so a report can be re-fed as a config and must
reproduce the run that wrote it.

Layering, lowest to highest precedence: registry defaults, preset
expansion, config file, ``--set`` overrides, then the ``NFCDS_SEED``
environment variable for the seed alone.
"""

from __future__ import annotations

import os
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import ConfigError

SEED_ENV_VAR = "NFCDS_SEED"

# key -> (type tag, default, allowed choices or None)
REGISTRY: Dict[str, Tuple[str, object, Optional[Tuple[str, ...]]]] = {
    "preset.name": ("str", "", ("", "sr4", "sr4_noisy", "denoise_010", "denoise_025", "denoise_050")),
    "task.operator": ("str", "identity", ("identity", "blur_gauss", "blur_box", "downsample")),
    "task.sigma_y": ("float", 0.0, None),
    "task.blur_size": ("int", 5, None),
    "task.blur_sigma": ("float", 1.5, None),
    "task.down_factor": ("int", 4, None),
    "task.antialias": ("str", "bicubic", ("bicubic", "box")),
    "schedule.kind": ("str", "linear", ("linear",)),
    "schedule.T": ("int", 1000, None),
    "schedule.beta_start": ("float", 1e-4, None),
    "schedule.beta_end": ("float", 0.02, None),
    "plan.nfe": ("int", 50, None),
    "plan.strategy": ("str", "uniform", ("uniform", "quadratic")),
    "plan.zeta": ("float", 1.0, None),
    "mask.r_thresh": ("float", 35.0, None),
    "mask.alpha": ("float", 5.0, None),
    "mask.bypass": ("bool", False, None),
    "mask.renormalize": ("bool", False, None),
    "guidance.kind": ("str", "ddnrlg", ("ddnrlg", "least_squares", "proximal")),
    "guidance.mu": ("float", 1.0, None),
    "guidance.solver": ("str", "auto", ("auto", "dense", "fft", "cg")),
    "denoiser.backend": ("str", "analytic", ("oracle", "analytic", "external")),
    "denoiser.prior_amplitude": ("float", 2.0, None),
    "denoiser.prior_exponent": ("float", 1.0, None),
    "denoiser.prior_floor": ("float", 0.5, None),
    "denoiser.prior_mean": ("float", 0.0, None),
    "denoiser.command": ("str", "", None),
    "denoiser.transport": ("str", "stdio", ("stdio", "tcp")),
    "denoiser.host": ("str", "127.0.0.1", None),
    "denoiser.port": ("int", 0, None),
    "denoiser.timeout": ("float", 30.0, None),
    "run.seed": ("int", 0, None),
    "run.synthesize_seed": ("int", 0, None),
    "run.height": ("int", 64, None),
    "run.width": ("int", 64, None),
    "run.channels": ("int", 1, None),
    "run.t": ("int", 0, None),
    "ablation.cutoff": ("float", 0.0, None),
    "ablation.cut_steps": ("str", "", None),
    "bench.nfe_list": ("str", "50,100", None),
    "bench.repeats": ("int", 3, None),
    "metrics.image_a": ("str", "", None),
    "metrics.image_b": ("str", "", None),
    "metrics.peak": ("float", 1.0, None),
    "io.input": ("str", "", None),
    "io.synthesize": ("bool", False, None),
    "io.truth": ("str", "", None),
    "io.output": ("str", "", None),
    "io.report": ("str", "", None),
    "io.trajectory": ("str", "", None),
    "io.radial_csv": ("str", "", None),
    "io.bit_depth": ("int", 16, None),
    "io.figures": ("bool", True, None),
}

# Mask and task defaults per named preset; explicit keys override these.
PRESETS: Dict[str, Dict[str, str]] = {
    "sr4": {
        "task.operator": "downsample",
        "task.down_factor": "4",
        "task.sigma_y": "0.0",
        "mask.r_thresh": "35",
        "mask.alpha": "5",
    },
    "sr4_noisy": {
        "task.operator": "downsample",
        "task.down_factor": "4",
        "task.sigma_y": "0.05",
        "mask.r_thresh": "25",
        "mask.alpha": "5",
    },
    "denoise_010": {
        "task.operator": "identity",
        "task.sigma_y": "0.1",
        "mask.r_thresh": "64",
        "mask.alpha": "5",
    },
    "denoise_025": {
        "task.operator": "identity",
        "task.sigma_y": "0.25",
        "mask.r_thresh": "35",
        "mask.alpha": "5",
    },
    "denoise_050": {
        "task.operator": "identity",
        "task.sigma_y": "0.5",
        "mask.r_thresh": "25",
        "mask.alpha": "5",
    },
}


def _coerce(key: str, raw: str) -> object:
    kind, _, choices = REGISTRY[key]
    raw = raw.strip()
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects an integer, got {raw!r}") from None
    if kind == "float":
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects a number, got {raw!r}") from None
        return value
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r} expects true/false, got {raw!r}")
    if choices is not None and raw not in choices:
        raise ConfigError(f"config key {key!r} must be one of {choices}, got {raw!r}")
    return raw


def _format(key: str, value: object) -> str:
    kind = REGISTRY[key][0]
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    return str(value)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Raw ``key = value`` pairs from config text; duplicates rejected."""
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty config key")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        raw[key] = value.strip()
    return raw


def parse_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    """``--set key=value`` arguments; later duplicates win."""
    out: Dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


class RunConfig:
    """Validated, fully-defaulted configuration for one command."""

    def __init__(self, values: Mapping[str, object]):
        self._values = dict(values)

    def __getitem__(self, key: str) -> object:
        if key not in REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def get_str(self, key: str) -> str:
        return str(self[key])

    def get_int(self, key: str) -> int:
        return int(self[key])  # type: ignore[arg-type]

    def get_float(self, key: str) -> float:
        return float(self[key])  # type: ignore[arg-type]

    def get_bool(self, key: str) -> bool:
        return bool(self[key])

    def with_value(self, key: str, raw: str) -> "RunConfig":
        if key not in REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        values = dict(self._values)
        values[key] = _coerce(key, raw)
        return RunConfig(values)

    def effective_lines(self) -> List[str]:
        """The full effective config as parseable, sorted assignments."""
        lines = []
        for key in sorted(self._values):
            if key == "preset.name":
                continue  # already expanded into concrete keys
            lines.append(f"{key} = {_format(key, self._values[key])}")
        return lines


def build_config(
    file_text: Optional[str] = None,
    overrides: Optional[Sequence[str]] = None,
    env: Optional[Mapping[str, str]] = None,
    source: str = "<config>",
) -> RunConfig:
    layers: Dict[str, str] = {}
    file_raw = parse_config_text(file_text, source) if file_text else {}
    override_raw = parse_overrides(overrides or [])

    for stage_name, stage in (("config file", file_raw), ("override", override_raw)):
        for key in stage:
            if key not in REGISTRY:
                raise ConfigError(f"unknown config key {key!r} (from {stage_name})")

    preset = override_raw.get("preset.name", file_raw.get("preset.name", ""))
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        layers.update(PRESETS[preset])
    layers.update(file_raw)
    layers.update(override_raw)

    env = os.environ if env is None else env
    if SEED_ENV_VAR in env:
        layers["run.seed"] = env[SEED_ENV_VAR]

    values: Dict[str, object] = {}
    for key, (_, default, _) in REGISTRY.items():
        values[key] = _coerce(key, layers[key]) if key in layers else default
    return RunConfig(values)


def load_config(
    path: Optional[str],
    overrides: Optional[Sequence[str]] = None,
    env: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    text = None
    source = "<defaults>"
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        source = path
    return build_config(text, overrides, env, source)


def require_key(cfg: RunConfig, key: str, why: str) -> str:
    """Non-empty string value of a key, or a ConfigError naming it."""
    value = cfg.get_str(key)
    if not value:
        raise ConfigError(f"missing config key {key!r}: {why}")
    return value


__all__ = [
    "PRESETS",
    "REGISTRY",
    "SEED_ENV_VAR",
    "RunConfig",
    "build_config",
    "load_config",
    "parse_config_text",
    "parse_overrides",
    "require_key",
]
