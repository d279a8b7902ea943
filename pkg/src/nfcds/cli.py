"""Command-line entry points.

Six subcommands share one configuration system: ``restore``,
``generate``, ``ablate``, ``mask-inspect``, ``metrics`` and ``bench``.
Every command accepts ``--config FILE`` plus any number of
``--set key=value`` overrides; the ``NFCDS_SEED`` environment variable
overrides the configured seed last.

Exit codes: 0 success, 2 configuration problem, 3 file I/O problem,
4 numerical or bridge failure. Failures print a single machine-parsable
``ERROR <code>: <reason>`` line to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import shlex
import sys
import time
from typing import Dict, Optional

import numpy as np

from .bridge import BridgeConfig
from .config import RunConfig, load_config, require_key
from .degradation import (
    CircularBlur,
    DegradationModel,
    Downsample,
    Identity,
    apply,
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
    radial_power,
)
from .errors import BridgeError, ConfigError, ImageFormatError, NumericalError
from .guidance import GuidanceSpec
from .imageio import read_image, write_image
from .metrics import psnr, radial_spectral_error, ssim
from .reporting import (
    figure_path,
    render_ablation_comparison,
    render_mask_profile,
    render_trajectory,
    write_ablation_csv,
    write_csv,
    write_report,
    write_trajectory_csv,
)
from .sampler import (
    AblationSpec,
    SamplerConfig,
    generate,
    nfcds_restore,
    run_ablation_suite,
)
from .schedule import NoiseSchedule, make_linear_schedule, make_plan
from .spectral import (
    FrequencyMaskSpec,
    bypass_mask,
    frequency_grid,
    soft_threshold_mask,
)

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


# ---------------------------------------------------------------------------
# builders from a validated RunConfig
# ---------------------------------------------------------------------------


def build_schedule(cfg: RunConfig) -> NoiseSchedule:
    return make_linear_schedule(
        cfg.get_int("schedule.T"),
        cfg.get_float("schedule.beta_start"),
        cfg.get_float("schedule.beta_end"),
    )


def build_plan(cfg: RunConfig, sched: NoiseSchedule):
    return make_plan(
        sched,
        nfe=cfg.get_int("plan.nfe"),
        strategy=cfg.get_str("plan.strategy"),
        zeta=cfg.get_float("plan.zeta"),
    )


def build_mask(cfg: RunConfig) -> FrequencyMaskSpec:
    if cfg.get_bool("mask.bypass"):
        return bypass_mask()
    return FrequencyMaskSpec(
        r_thresh=cfg.get_float("mask.r_thresh"),
        alpha=cfg.get_float("mask.alpha"),
        renormalize=cfg.get_bool("mask.renormalize"),
    )


def build_guidance(cfg: RunConfig) -> GuidanceSpec:
    return GuidanceSpec(
        kind=cfg.get_str("guidance.kind"),
        mu=cfg.get_float("guidance.mu"),
        solver=cfg.get_str("guidance.solver"),
    )


def build_model(cfg: RunConfig) -> DegradationModel:
    operator_name = cfg.get_str("task.operator")
    if operator_name == "identity":
        operator = Identity()
    elif operator_name == "blur_gauss":
        operator = CircularBlur(
            kernel=gaussian_kernel(cfg.get_int("task.blur_size"), cfg.get_float("task.blur_sigma"))
        )
    elif operator_name == "blur_box":
        operator = CircularBlur(kernel=box_kernel(cfg.get_int("task.blur_size")))
    else:
        factor = cfg.get_int("task.down_factor")
        kernel = (
            bicubic_kernel(factor) if cfg.get_str("task.antialias") == "bicubic" else box_kernel(factor)
        )
        operator = Downsample(factor=factor, antialias_kernel=kernel)
    return DegradationModel(operator=operator, sigma_y=cfg.get_float("task.sigma_y"))


def build_denoiser(cfg: RunConfig, shape, truth: Optional[np.ndarray]):
    backend = cfg.get_str("denoiser.backend")
    if backend == "oracle":
        if truth is None:
            raise ConfigError("missing config key 'io.truth': the oracle backend needs the clean image")
        return OracleDenoiser(truth)
    if backend == "analytic":
        mean = np.full(shape, cfg.get_float("denoiser.prior_mean"))
        power = radial_power(
            shape[0],
            shape[1],
            amplitude=cfg.get_float("denoiser.prior_amplitude"),
            exponent=cfg.get_float("denoiser.prior_exponent"),
            floor=cfg.get_float("denoiser.prior_floor"),
        )
        return AnalyticGaussianDenoiser(StationaryGaussianPrior(mean=mean, spectral_power=power))
    transport = cfg.get_str("denoiser.transport")
    command = tuple(shlex.split(cfg.get_str("denoiser.command"))) if transport == "stdio" else ()
    bridge = BridgeConfig(
        transport=transport,
        command=command,
        host=cfg.get_str("denoiser.host"),
        port=cfg.get_int("denoiser.port"),
        timeout=cfg.get_float("denoiser.timeout"),
    )
    return ExternalDenoiser(bridge)


def _close_denoiser(denoiser) -> None:
    close = getattr(denoiser, "close", None)
    if close is not None:
        close()


def _restoration_target_shape(model: DegradationModel, y: np.ndarray):
    if isinstance(model.operator, Downsample):
        f = model.operator.factor
        return (y.shape[0] * f, y.shape[1] * f) + y.shape[2:]
    return y.shape


def _generation_shape(cfg: RunConfig):
    h, w = cfg.get_int("run.height"), cfg.get_int("run.width")
    c = cfg.get_int("run.channels")
    return (h, w) if c == 1 else (h, w, c)


def _load_inputs(cfg: RunConfig, model: DegradationModel):
    """Measurement plus optional ground truth, honoring io.synthesize."""
    input_path = require_key(cfg, "io.input", "the measurement (or clean source) image")
    loaded = read_image(input_path)
    truth: Optional[np.ndarray] = None
    if cfg.get_str("io.truth"):
        truth = read_image(cfg.get_str("io.truth"))
    if cfg.get_bool("io.synthesize"):
        clean = loaded
        y = synthesize_measurement(model, clean, seed=cfg.get_int("run.synthesize_seed"))
        if truth is None:
            truth = clean
    else:
        y = loaded
    return y, truth


def _quality_metrics(cfg: RunConfig, truth: Optional[np.ndarray], output: np.ndarray, y: np.ndarray) -> Dict[str, object]:
    metrics: Dict[str, object] = {}
    if truth is None:
        return metrics
    peak = cfg.get_float("metrics.peak")
    metrics["psnr_output"] = psnr(truth, output, peak=peak)
    if min(output.shape[0], output.shape[1]) >= 11:
        metrics["ssim_output"] = ssim(truth, output, peak=peak)
    if y.shape == truth.shape:
        metrics["psnr_input"] = psnr(truth, y, peak=peak)
    return metrics


def _emit_report(
    cfg: RunConfig,
    command: str,
    metrics: Dict[str, object],
    trajectory=None,
    mask=None,
    mask_shape=None,
    ablation_report=None,
) -> None:
    report_path = cfg.get_str("io.report")
    if not report_path:
        return
    ordered: Dict[str, object] = {"command": command}
    ordered.update(metrics)
    write_report(report_path, cfg.effective_lines(), ordered)
    if not cfg.get_bool("io.figures"):
        return
    if mask is not None:
        if mask_shape is None:
            mask_shape = (cfg.get_int("run.height"), cfg.get_int("run.width"))
        render_mask_profile(
            figure_path(report_path, "mask"),
            mask,
            mask_shape[0],
            mask_shape[1],
            cfg.get_int("run.t"),
        )
    if trajectory is not None and len(trajectory):
        render_trajectory(figure_path(report_path, "trajectory"), trajectory)
    if ablation_report is not None:
        render_ablation_comparison(figure_path(report_path, "ablation"), ablation_report)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_restore(cfg: RunConfig) -> int:
    sched = build_schedule(cfg)
    model = build_model(cfg)
    mask = build_mask(cfg)
    y, truth = _load_inputs(cfg, model)
    shape = _restoration_target_shape(model, y)
    reference = truth if truth is not None and truth.shape == shape else None
    want_trajectory = bool(cfg.get_str("io.trajectory")) or bool(cfg.get_str("io.report"))
    sampler_cfg = SamplerConfig(
        plan=build_plan(cfg, sched),
        mask=mask,
        guidance=build_guidance(cfg),
        seed=cfg.get_int("run.seed"),
        record_trajectory=want_trajectory,
        reference=reference,
    )
    denoiser = build_denoiser(cfg, shape, truth)
    try:
        output, trajectory = nfcds_restore(y, model, denoiser, sampler_cfg, sched)
    finally:
        _close_denoiser(denoiser)

    output_path = require_key(cfg, "io.output", "where to write the restored image")
    write_image(output_path, output, bit_depth=cfg.get_int("io.bit_depth"))
    if cfg.get_str("io.trajectory"):
        write_trajectory_csv(cfg.get_str("io.trajectory"), trajectory)

    metrics = _quality_metrics(cfg, truth, output, y)
    metrics["residual_l2"] = float(np.linalg.norm(y - apply(model, output)))
    _emit_report(cfg, "restore", metrics, trajectory=trajectory, mask=mask, mask_shape=shape)
    return 0


def cmd_generate(cfg: RunConfig) -> int:
    sched = build_schedule(cfg)
    shape = _generation_shape(cfg)
    truth = read_image(cfg.get_str("io.truth")) if cfg.get_str("io.truth") else None
    want_trajectory = bool(cfg.get_str("io.trajectory")) or bool(cfg.get_str("io.report"))
    sampler_cfg = SamplerConfig(
        plan=build_plan(cfg, sched),
        mask=build_mask(cfg),
        seed=cfg.get_int("run.seed"),
        shape=shape,
        record_trajectory=want_trajectory,
    )
    denoiser = build_denoiser(cfg, shape, truth)
    try:
        sample, trajectory = generate(denoiser, sampler_cfg, sched)
    finally:
        _close_denoiser(denoiser)

    output_path = require_key(cfg, "io.output", "where to write the generated image")
    write_image(output_path, sample, bit_depth=cfg.get_int("io.bit_depth"))
    if cfg.get_str("io.trajectory"):
        write_trajectory_csv(cfg.get_str("io.trajectory"), trajectory)
    _emit_report(cfg, "generate", {}, trajectory=trajectory, mask=sampler_cfg.mask, mask_shape=shape)
    return 0


def _ablation_grid(cfg: RunConfig, mask: FrequencyMaskSpec, guided: bool) -> Dict[str, SamplerConfig]:
    cutoff = cfg.get_float("ablation.cutoff")
    if cutoff <= 0:
        cutoff = cfg.get_float("mask.r_thresh")
    sched = build_schedule(cfg)
    plan = build_plan(cfg, sched)
    base = dict(
        plan=plan,
        seed=cfg.get_int("run.seed"),
        band_radius=cutoff,
        guidance=build_guidance(cfg) if guided else None,
        shape=None if guided else _generation_shape(cfg),
    )
    grid: Dict[str, SamplerConfig] = {
        "baseline": SamplerConfig(mask=bypass_mask(), **base),
    }
    if not mask.bypass:
        grid["filtered"] = SamplerConfig(mask=mask, **base)
    grid["zero_low"] = SamplerConfig(
        mask=bypass_mask(), ablation=AblationSpec(mode="zero_low", cutoff=cutoff), **base
    )
    grid["zero_high"] = SamplerConfig(
        mask=bypass_mask(), ablation=AblationSpec(mode="zero_high", cutoff=cutoff), **base
    )
    steps_raw = cfg.get_str("ablation.cut_steps")
    if steps_raw:
        for token in steps_raw.split(","):
            try:
                k = int(token.strip())
            except ValueError:
                raise ConfigError(f"config key 'ablation.cut_steps' expects integers, got {token.strip()!r}") from None
            grid[f"cut_low_after_{k}"] = SamplerConfig(
                mask=bypass_mask(), ablation=AblationSpec(mode="cut_low_after", cutoff=cutoff, step=k), **base
            )
            grid[f"cut_high_after_{k}"] = SamplerConfig(
                mask=bypass_mask(), ablation=AblationSpec(mode="cut_high_after", cutoff=cutoff, step=k), **base
            )
    return grid


def cmd_ablate(cfg: RunConfig) -> int:
    sched = build_schedule(cfg)
    mask = build_mask(cfg)
    guided = bool(cfg.get_str("io.input"))
    model = build_model(cfg) if guided else None
    y = truth = None
    if guided:
        y, truth = _load_inputs(cfg, model)
        shape = _restoration_target_shape(model, y)
    else:
        shape = _generation_shape(cfg)
    reference = truth if truth is not None and truth.shape == shape else None

    grid = _ablation_grid(cfg, mask, guided)
    denoiser = build_denoiser(cfg, shape, truth)
    try:
        report = run_ablation_suite(denoiser, grid, sched, model=model, y=y, reference=reference)
    finally:
        _close_denoiser(denoiser)

    output_path = require_key(cfg, "io.output", "where to write the ablation summary CSV")
    write_ablation_csv(output_path, report)
    stem = output_path[:-4] if output_path.lower().endswith(".csv") else output_path
    for entry in report.entries:
        write_trajectory_csv(f"{stem}_{entry.name}.csv", entry.trajectory)
    _emit_report(
        cfg,
        "ablate",
        {f"{e.name}.{k}": v for e in report.entries for k, v in e.metrics.items()},
        mask=mask,
        mask_shape=shape,
        ablation_report=report,
    )
    return 0


def cmd_mask_inspect(cfg: RunConfig) -> int:
    mask = build_mask(cfg)
    h, w = cfg.get_int("run.height"), cfg.get_int("run.width")
    values = soft_threshold_mask(frequency_grid(h, w), mask, cfg.get_int("run.t"))
    output_path = require_key(cfg, "io.output", "where to write the mask image")
    write_image(output_path, values, bit_depth=cfg.get_int("io.bit_depth"))
    metrics = {
        "mask_min": float(values.min()),
        "mask_max": float(values.max()),
        "mask_mean": float(values.mean()),
    }
    _emit_report(cfg, "mask-inspect", metrics, mask=mask)
    return 0


def cmd_metrics(cfg: RunConfig) -> int:
    path_a = require_key(cfg, "metrics.image_a", "first image of the pair")
    path_b = require_key(cfg, "metrics.image_b", "second image of the pair")
    a, b = read_image(path_a), read_image(path_b)
    peak = cfg.get_float("metrics.peak")
    record: Dict[str, object] = {"psnr": psnr(a, b, peak=peak)}
    record["ssim"] = (
        ssim(a, b, peak=peak) if min(a.shape[0], a.shape[1]) >= 11 else None
    )
    line = json.dumps(record)
    print(line)
    if cfg.get_str("io.radial_csv"):
        radii, errors = radial_spectral_error(a, b)
        write_csv(cfg.get_str("io.radial_csv"), ("radius", "mean_abs_spectral_error"), zip(radii.tolist(), errors.tolist()))
    if cfg.get_str("io.report"):
        reportable = {k: (math.nan if v is None else v) for k, v in record.items()}
        _emit_report(cfg, "metrics", reportable)
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    sched = build_schedule(cfg)
    model = build_model(cfg)
    shape = _generation_shape(cfg)
    prior_rng = np.random.Generator(np.random.Philox(cfg.get_int("run.synthesize_seed")))
    truth = prior_rng.standard_normal(shape)
    y = synthesize_measurement(model, truth, seed=cfg.get_int("run.synthesize_seed"))
    denoiser = build_denoiser(cfg, shape, truth)
    mask = build_mask(cfg)
    guidance = build_guidance(cfg)
    repeats = cfg.get_int("bench.repeats")
    if repeats < 1:
        raise ConfigError(f"config key 'bench.repeats' must be >= 1, got {repeats}")
    rows = []
    metrics: Dict[str, object] = {}
    try:
        for token in cfg.get_str("bench.nfe_list").split(","):
            try:
                nfe = int(token.strip())
            except ValueError:
                raise ConfigError(f"config key 'bench.nfe_list' expects integers, got {token.strip()!r}") from None
            plan = make_plan(sched, nfe=nfe, strategy=cfg.get_str("plan.strategy"), zeta=cfg.get_float("plan.zeta"))
            sampler_cfg = SamplerConfig(plan=plan, mask=mask, guidance=guidance, seed=cfg.get_int("run.seed"))
            start = time.perf_counter()
            for _ in range(repeats):
                nfcds_restore(y, model, denoiser, sampler_cfg, sched)
            per_run = (time.perf_counter() - start) / repeats
            rows.append((nfe, per_run))
            metrics[f"seconds_nfe_{nfe}"] = per_run
            print(f"nfe={nfe} seconds_per_run={per_run:.6f}")
    finally:
        _close_denoiser(denoiser)
    if cfg.get_str("io.output"):
        write_csv(cfg.get_str("io.output"), ("nfe", "seconds_per_run"), rows)
    _emit_report(cfg, "bench", metrics)
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

_COMMANDS = {
    "restore": cmd_restore,
    "generate": cmd_generate,
    "ablate": cmd_ablate,
    "mask-inspect": cmd_mask_inspect,
    "metrics": cmd_metrics,
    "bench": cmd_bench,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfcds",
        description="Zero-shot image restoration with frequency-controlled noise injection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="flat key = value config file")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )
    return parser


def _reason(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or exc.__class__.__name__


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"ERROR {EXIT_CONFIG}: {_reason(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except (ImageFormatError, OSError) as exc:
        print(f"ERROR {EXIT_IO}: {_reason(exc)}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, BridgeError) as exc:
        print(f"ERROR {EXIT_NUMERIC}: {_reason(exc)}", file=sys.stderr)
        return EXIT_NUMERIC


def run() -> None:
    raise SystemExit(main())


__all__ = ["EXIT_CONFIG", "EXIT_IO", "EXIT_NUMERIC", "main", "run"]
