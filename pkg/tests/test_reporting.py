"""Report files, CSV output, and figure rendering."""

import math

import numpy as np

from nfcds.config import build_config, parse_config_text
from nfcds.degradation import DegradationModel, Identity, synthesize_measurement
from nfcds.denoiser import OracleDenoiser
from nfcds.guidance import GuidanceSpec
from nfcds.reporting import (
    figure_path,
    format_metric,
    render_ablation_comparison,
    render_mask_profile,
    render_trajectory,
    write_ablation_csv,
    write_csv,
    write_report,
    write_trajectory_csv,
)
from nfcds.sampler import SamplerConfig, TRAJECTORY_FIELDS, nfcds_restore, run_ablation_suite
from nfcds.schedule import make_linear_schedule, make_plan
from nfcds.spectral import FrequencyMaskSpec, bypass_mask

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _trajectory(record_reference=True):
    sched = make_linear_schedule(1000)
    plan = make_plan(sched, 5, zeta=1.0)
    rng = np.random.default_rng(21)
    clean = rng.standard_normal((12, 12))
    model = DegradationModel(Identity(), sigma_y=0.1)
    y = synthesize_measurement(model, clean, seed=3)
    cfg = SamplerConfig(
        plan=plan,
        mask=FrequencyMaskSpec(r_thresh=3.0, alpha=5.0),
        guidance=GuidanceSpec(mu=1.0),
        seed=0,
        record_trajectory=True,
        reference=clean if record_reference else None,
    )
    _, traj = nfcds_restore(y, model, OracleDenoiser(clean), cfg, sched)
    return traj


def test_format_metric():
    assert format_metric(float("nan")) == "nan"
    assert format_metric(0.1) == repr(0.1)
    assert format_metric(3) == "3"
    assert format_metric("restore") == "restore"


def test_report_reparses_as_config(tmp_path):
    cfg = build_config("plan.nfe = 7\nmask.r_thresh = 4.5\n", env={})
    path = str(tmp_path / "run_report.txt")
    write_report(path, cfg.effective_lines(), {"command": "restore", "psnr_output": 12.5})
    text = open(path).read()

    raw = parse_config_text(text)
    assert raw["plan.nfe"] == "7"
    assert "command" not in raw  # metric lines are comments

    rebuilt = build_config(text, env={})
    assert rebuilt.effective_lines() == cfg.effective_lines()


def test_report_metric_lines_exact(tmp_path):
    path = str(tmp_path / "r.txt")
    write_report(path, ["plan.nfe = 5"], {"a": 1.5, "b": float("nan"), "c": "x"})
    lines = open(path).read().splitlines()
    assert lines[0] == "plan.nfe = 5"
    assert lines[1] == ""
    assert lines[2] == "# a = 1.5"
    assert lines[3] == "# b = nan"
    assert lines[4] == "# c = x"


def test_write_csv_content(tmp_path):
    path = str(tmp_path / "table.csv")
    write_csv(path, ("x", "y"), [(1, 2.5), (2, float("nan"))])
    assert open(path).read() == "x,y\n1,2.5\n2,nan\n"


def test_trajectory_csv_header_and_length(tmp_path):
    traj = _trajectory()
    path = str(tmp_path / "traj.csv")
    write_trajectory_csv(path, traj)
    lines = open(path).read().splitlines()
    assert lines[0] == ",".join(TRAJECTORY_FIELDS)
    assert len(lines) == 1 + len(traj)
    first = lines[1].split(",")
    assert first[0] == "0"  # step index
    assert float(first[2]) >= 0.0  # residual


def test_figure_path_stems():
    assert figure_path("out/report.txt", "mask") == "out/report_mask.png"
    assert figure_path("run.cfg", "trajectory") == "run_trajectory.png"
    assert figure_path("notes.report", "mask") == "notes_mask.png"
    assert figure_path("bare", "mask") == "bare_mask.png"


def test_mask_profile_figure_is_png(tmp_path):
    path = str(tmp_path / "mask.png")
    render_mask_profile(path, FrequencyMaskSpec(r_thresh=4.0, alpha=5.0), 16, 16)
    data = open(path, "rb").read()
    assert data.startswith(PNG_MAGIC)
    assert len(data) > 1000


def test_mask_profile_handles_bypass(tmp_path):
    path = str(tmp_path / "bypass.png")
    render_mask_profile(path, bypass_mask(), 8, 8)
    assert open(path, "rb").read().startswith(PNG_MAGIC)


def test_trajectory_figure_renders(tmp_path):
    traj = _trajectory()
    path = str(tmp_path / "traj.png")
    render_trajectory(path, traj)
    assert open(path, "rb").read().startswith(PNG_MAGIC)


def test_trajectory_figure_skips_all_nan_series(tmp_path):
    traj = _trajectory(record_reference=False)
    rows = traj.rows()
    assert all(math.isnan(r[3]) for r in rows)  # no reference, no band errors
    path = str(tmp_path / "sparse.png")
    render_trajectory(path, traj)
    assert open(path, "rb").read().startswith(PNG_MAGIC)


def test_figures_are_byte_stable(tmp_path):
    spec = FrequencyMaskSpec(r_thresh=4.0, alpha=5.0)
    a = str(tmp_path / "a.png")
    b = str(tmp_path / "b.png")
    render_mask_profile(a, spec, 16, 16)
    render_mask_profile(b, spec, 16, 16)
    assert open(a, "rb").read() == open(b, "rb").read()


def test_ablation_outputs(tmp_path):
    sched = make_linear_schedule(200)
    plan = make_plan(sched, 4, zeta=1.0)
    rng = np.random.default_rng(33)
    clean = rng.standard_normal((12, 12))
    model = DegradationModel(Identity(), sigma_y=0.1)
    y = synthesize_measurement(model, clean, seed=5)
    base = dict(plan=plan, guidance=GuidanceSpec(mu=1.0), seed=1, band_radius=3.0)
    configs = {
        "baseline": SamplerConfig(mask=bypass_mask(), **base),
        "filtered": SamplerConfig(mask=FrequencyMaskSpec(r_thresh=3.0, alpha=5.0), **base),
    }
    report = run_ablation_suite(
        OracleDenoiser(clean), configs, sched, model=model, y=y, reference=clean
    )

    csv_path = str(tmp_path / "ablate.csv")
    write_ablation_csv(csv_path, report)
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "config,metric,value"
    assert len(lines) == 1 + len(report.summary_rows())
    assert any(line.startswith("baseline,") for line in lines[1:])

    fig = str(tmp_path / "ablate.png")
    render_ablation_comparison(fig, report)
    assert open(fig, "rb").read().startswith(PNG_MAGIC)
