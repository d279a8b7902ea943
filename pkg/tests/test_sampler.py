"""Reverse-loop tests.

The deterministic contracts (oracle collapse, bypass equivalence,
noise-spectrum identity, ablation band removal) are checked exactly.
The distributional contracts use frozen seed sets with pre-verified
margins; the generation covariance check pairs every chain run with an
exact prior sample drawn from the same seed, which cancels the Monte
Carlo fluctuation and isolates the finite-step transport error of the
deterministic update.
"""

import math

import numpy as np
import pytest

from nfcds.degradation import (
    CircularBlur,
    DegradationModel,
    Downsample,
    Identity,
    apply,
    box_kernel,
    gaussian_kernel,
    synthesize_measurement,
)
from nfcds.denoiser import (
    AnalyticGaussianDenoiser,
    OracleDenoiser,
    StationaryGaussianPrior,
    radial_power,
    sample_prior,
)
from nfcds.errors import ConfigError, NumericalError
from nfcds.guidance import GuidanceSpec
from nfcds.sampler import (
    TRAJECTORY_FIELDS,
    AblationSpec,
    SamplerConfig,
    generate,
    nfcds_restore,
    pnp_restore_baseline,
    run_ablation_suite,
)
from nfcds.schedule import make_linear_schedule, make_plan
from nfcds.spectral import (
    FrequencyMaskSpec,
    band_split,
    bypass_mask,
    hard_band_split,
    nfcds_filter,
    soft_threshold_mask,
    forward_fft2,
)

SCHED = make_linear_schedule(1000)
MASK4 = FrequencyMaskSpec(r_thresh=4.0, alpha=5.0)


def _prior(h, w, seed_mean=None):
    mean = np.zeros((h, w))
    if seed_mean is not None:
        rng = np.random.Generator(np.random.Philox(seed_mean))
        mean = rng.standard_normal((h, w))
    return StationaryGaussianPrior(
        mean=mean, spectral_power=radial_power(h, w, amplitude=2.0, exponent=1.0, floor=0.5)
    )


def _denoise_setup(h=16, w=16, sigma_y=0.25, seed=0):
    prior = _prior(h, w)
    denoiser = AnalyticGaussianDenoiser(prior)
    model = DegradationModel(operator=Identity(), sigma_y=sigma_y)
    x0 = sample_prior(prior, np.random.Generator(np.random.Philox(1000 + seed)))
    y = synthesize_measurement(model, x0, seed=2000 + seed)
    return prior, denoiser, model, x0, y


# ---------------------------------------------------------------------------
# exact contracts
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("nfe", [1, 10, 50])
def test_exact_oracle_collapse(nfe):
    # With exact noise prediction, no data term and no fresh noise the
    # loop inverts the forward map at every step for any step count.
    rng = np.random.Generator(np.random.Philox(42))
    x0 = rng.standard_normal((16, 16))
    model = DegradationModel(operator=Identity(), sigma_y=0.0)
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=nfe, zeta=0.0),
        mask=bypass_mask(),
        guidance=GuidanceSpec(mu=0.0),
        seed=7,
    )
    out, _ = nfcds_restore(x0, model, OracleDenoiser(x0), cfg, SCHED)
    assert np.max(np.abs(out - x0)) < 1e-8


def test_exact_oracle_collapse_multichannel():
    rng = np.random.Generator(np.random.Philox(43))
    x0 = rng.standard_normal((12, 12, 3))
    model = DegradationModel(operator=Identity(), sigma_y=0.0)
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=10, zeta=0.0),
        mask=bypass_mask(),
        guidance=GuidanceSpec(mu=0.0),
        seed=3,
    )
    out, _ = nfcds_restore(x0, model, OracleDenoiser(x0), cfg, SCHED)
    assert np.max(np.abs(out - x0)) < 1e-8


def test_fixed_seed_runs_are_bit_identical():
    _, denoiser, model, _, y = _denoise_setup()
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=8),
        mask=MASK4,
        guidance=GuidanceSpec(),
        seed=11,
        record_trajectory=True,
    )
    out_a, traj_a = nfcds_restore(y, model, denoiser, cfg, SCHED)
    out_b, traj_b = nfcds_restore(y, model, denoiser, cfg, SCHED)
    assert np.array_equal(out_a, out_b)
    assert traj_a.rows() == traj_b.rows()


def test_bypass_mask_reproduces_baseline_bit_exactly():
    _, denoiser, model, _, y = _denoise_setup()
    masked_cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=8), mask=MASK4, guidance=GuidanceSpec(), seed=5
    )
    bypass_cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=8), mask=bypass_mask(), guidance=GuidanceSpec(), seed=5
    )
    via_bypass, _ = nfcds_restore(y, model, denoiser, bypass_cfg, SCHED)
    via_baseline, _ = pnp_restore_baseline(y, model, denoiser, masked_cfg, SCHED)
    assert np.array_equal(via_bypass, via_baseline)

    filtered, _ = nfcds_restore(y, model, denoiser, masked_cfg, SCHED)
    assert np.max(np.abs(filtered - via_bypass)) > 1e-6


def test_noise_spectrum_matches_mask_on_recorded_trajectory():
    _, denoiser, model, _, y = _denoise_setup()
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=6),
        mask=MASK4,
        guidance=GuidanceSpec(),
        seed=9,
        record_trajectory=True,
        record_full=True,
    )
    _, traj = nfcds_restore(y, model, denoiser, cfg, SCHED)
    checked = 0
    for rec in traj.records:
        if rec.injected is None:
            continue
        mask = soft_threshold_mask(forward_fft2(rec.eps_bar).grid, MASK4, rec.t)
        got = np.abs(forward_fft2(rec.injected).coefficients)
        want = mask * np.abs(forward_fft2(rec.eps_bar).coefficients)
        assert np.max(np.abs(got - want)) < 1e-9
        checked += 1
    assert checked == len(traj.records) - 1


def test_non_finite_state_aborts():
    x0 = np.full((8, 8), np.nan)
    model = DegradationModel(operator=Identity(), sigma_y=0.0)
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=4), mask=bypass_mask(), guidance=GuidanceSpec(mu=0.0), seed=0
    )
    with pytest.raises(NumericalError, match="non-finite"):
        nfcds_restore(np.zeros((8, 8)), model, OracleDenoiser(x0), cfg, SCHED)


# ---------------------------------------------------------------------------
# trajectory contents
# ---------------------------------------------------------------------------


def test_trajectory_schema_and_counts():
    assert TRAJECTORY_FIELDS == (
        "step",
        "t",
        "residual_l2",
        "low_band_err",
        "high_band_err",
        "noise_low_energy",
        "noise_high_energy",
    )
    _, denoiser, model, x0, y = _denoise_setup()
    nfe = 7
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=nfe),
        mask=MASK4,
        guidance=GuidanceSpec(),
        seed=2,
        record_trajectory=True,
        reference=x0,
    )
    _, traj = nfcds_restore(y, model, denoiser, cfg, SCHED)
    assert len(traj) == nfe
    rows = traj.rows()
    assert [r[0] for r in rows] == list(range(nfe))
    ts = [r[1] for r in rows]
    assert ts == sorted(ts, reverse=True) and ts[0] == 999
    for row in rows:
        assert math.isfinite(row[2])  # residual against y
        assert math.isfinite(row[3]) and math.isfinite(row[4])  # band errors vs reference
    for rec in traj.records[:-1]:
        assert math.isfinite(rec.noise_low_energy) and rec.noise_low_energy >= 0
        assert math.isfinite(rec.noise_high_energy) and rec.noise_high_energy > 0
        assert rec.estimate is None and rec.eps_bar is None  # record_full off
    last = traj.records[-1]
    assert math.isnan(last.noise_low_energy) and math.isnan(last.noise_high_energy)


def test_trajectory_band_fields_nan_without_band_rule():
    _, denoiser, model, _, y = _denoise_setup()
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=4),
        mask=bypass_mask(),
        guidance=GuidanceSpec(),
        seed=2,
        record_trajectory=True,
    )
    _, traj = nfcds_restore(y, model, denoiser, cfg, SCHED)
    for row in traj.rows():
        assert math.isnan(row[3]) and math.isnan(row[4])
        assert math.isnan(row[5]) and math.isnan(row[6])
        assert math.isfinite(row[2])


def test_trajectory_fixed_band_radius_applies_to_bypass():
    _, denoiser, model, x0, y = _denoise_setup()
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=4),
        mask=bypass_mask(),
        guidance=GuidanceSpec(),
        seed=2,
        record_trajectory=True,
        band_radius=4.0,
        reference=x0,
    )
    _, traj = nfcds_restore(y, model, denoiser, cfg, SCHED)
    for rec in traj.records[:-1]:
        assert rec.noise_low_energy > 0 and rec.noise_high_energy > 0
        assert math.isfinite(rec.low_band_err)


# ---------------------------------------------------------------------------
# ablation modes
# ---------------------------------------------------------------------------


def _generation_cfg(ablation, nfe=6, seed=4, shape=(16, 16)):
    return SamplerConfig(
        plan=make_plan(SCHED, nfe=nfe),
        mask=bypass_mask(),
        ablation=ablation,
        seed=seed,
        shape=shape,
        record_trajectory=True,
        record_full=True,
    )


def test_zero_low_ablation_removes_low_band_exactly():
    prior = _prior(16, 16)
    cfg = _generation_cfg(AblationSpec(mode="zero_low", cutoff=4.0))
    _, traj = generate(AnalyticGaussianDenoiser(prior), cfg, SCHED)
    for rec in traj.records[:-1]:
        low, high = hard_band_split(rec.injected, 4.0)
        assert np.sum(low**2) < 1e-18
        assert rec.noise_low_energy < 1e-18
        assert rec.noise_high_energy > 1.0
        # the kept band passes through untouched
        _, want_high = hard_band_split(rec.eps_bar, 4.0)
        assert np.max(np.abs(high - want_high)) < 1e-10


def test_zero_high_ablation_keeps_only_low_band():
    prior = _prior(16, 16)
    cfg = _generation_cfg(AblationSpec(mode="zero_high", cutoff=4.0))
    _, traj = generate(AnalyticGaussianDenoiser(prior), cfg, SCHED)
    for rec in traj.records[:-1]:
        assert rec.noise_high_energy < 1e-18
        assert rec.noise_low_energy > 0


def test_cut_high_after_step_switches_at_the_step_index():
    k = 3
    cfg = _generation_cfg(AblationSpec(mode="cut_high_after", cutoff=4.0, step=k), nfe=6)
    prior = _prior(16, 16)
    _, traj = generate(AnalyticGaussianDenoiser(prior), cfg, SCHED)
    for rec in traj.records[:-1]:
        if rec.step < k:
            assert np.array_equal(rec.injected, rec.eps_bar)  # full spectrum
        else:
            assert rec.noise_high_energy < 1e-18
            low, _ = hard_band_split(rec.eps_bar, 4.0)
            assert np.max(np.abs(rec.injected - low)) < 1e-10


def test_cut_low_after_step_keeps_full_spectrum_before():
    k = 2
    cfg = _generation_cfg(AblationSpec(mode="cut_low_after", cutoff=4.0, step=k), nfe=5)
    prior = _prior(16, 16)
    _, traj = generate(AnalyticGaussianDenoiser(prior), cfg, SCHED)
    for rec in traj.records[:-1]:
        if rec.step < k:
            assert np.array_equal(rec.injected, rec.eps_bar)
        else:
            assert rec.noise_low_energy < 1e-18


# ---------------------------------------------------------------------------
# filter composition switches
# ---------------------------------------------------------------------------


def test_filter_fresh_only_leaves_predicted_component_unfiltered():
    rng = np.random.Generator(np.random.Philox(21))
    x0 = rng.standard_normal((8, 8))
    zeta = 0.5
    seed = 13
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=4, zeta=zeta),
        mask=MASK4,
        guidance=GuidanceSpec(mu=0.0),
        seed=seed,
        record_trajectory=True,
        record_full=True,
        filter_fresh_only=True,
    )
    model = DegradationModel(operator=Identity(), sigma_y=0.0)
    _, traj = nfcds_restore(x0, model, OracleDenoiser(x0), cfg, SCHED)

    state_in = np.random.Generator(np.random.Philox(seed)).standard_normal((8, 8))
    for rec in traj.records[:-1]:
        ab = SCHED.alpha_bar_at(rec.t)
        eps_pred = (state_in - math.sqrt(ab) * x0) / math.sqrt(1.0 - ab)
        eps_fresh = (rec.eps_bar - math.sqrt(1.0 - zeta) * eps_pred) / math.sqrt(zeta)
        want = math.sqrt(1.0 - zeta) * eps_pred + math.sqrt(zeta) * nfcds_filter(
            eps_fresh, MASK4, rec.t
        )
        assert np.max(np.abs(rec.injected - want)) < 1e-10
        blanket = nfcds_filter(rec.eps_bar, MASK4, rec.t)
        assert np.max(np.abs(rec.injected - blanket)) > 1e-8
        state_in = rec.state


# ---------------------------------------------------------------------------
# distributional behaviour (frozen seeds, pre-verified margins)
# ---------------------------------------------------------------------------


def test_generation_covariance_matches_prior_per_frequency():
    # 500 chain samples against 500 exact prior samples drawn from the
    # same seeds; the shared white-noise realization cancels, leaving
    # only the finite-step transport error of the zeta=0 update
    # (realized max deviation is about 0.08 at 50 steps).
    h = w = 16
    prior = _prior(h, w)
    denoiser = AnalyticGaussianDenoiser(prior)
    plan = make_plan(SCHED, nfe=50, zeta=0.0)
    n_runs = 500
    power_chain = np.zeros((h, w))
    power_prior = np.zeros((h, w))
    for seed in range(n_runs):
        cfg = SamplerConfig(plan=plan, mask=bypass_mask(), seed=seed, shape=(h, w))
        sample, _ = generate(denoiser, cfg, SCHED)
        ref = sample_prior(prior, np.random.Generator(np.random.Philox(seed)))
        power_chain += np.abs(forward_fft2(sample).coefficients) ** 2
        power_prior += np.abs(forward_fft2(ref).coefficients) ** 2
    power_chain /= n_runs * h * w
    power_prior /= n_runs * h * w
    assert np.max(np.abs(power_chain / power_prior - 1.0)) < 0.15
    assert abs(power_chain.sum() / prior.spectral_power.sum() - 1.0) < 0.15


def test_low_band_error_improves_over_bypass_on_paired_seeds():
    # Ten paired denoising runs; pre-verified margin: the filtered run
    # wins on every pair with a large gap.
    prior, denoiser, model, _, _ = _denoise_setup()
    plan = make_plan(SCHED, nfe=10)
    wins = 0
    gaps = []
    for seed in range(10):
        x0 = sample_prior(prior, np.random.Generator(np.random.Philox(1000 + seed)))
        y = synthesize_measurement(model, x0, seed=2000 + seed)
        cfg = SamplerConfig(plan=plan, mask=MASK4, guidance=GuidanceSpec(), seed=seed)
        filtered, _ = nfcds_restore(y, model, denoiser, cfg, SCHED)
        baseline, _ = pnp_restore_baseline(y, model, denoiser, cfg, SCHED)
        err_f = np.linalg.norm(band_split(filtered - x0, MASK4, 0)[0])
        err_b = np.linalg.norm(band_split(baseline - x0, MASK4, 0)[0])
        wins += err_f <= err_b
        gaps.append(err_b - err_f)
    assert wins >= 9
    assert np.mean(gaps) > 0


def test_injected_low_band_energy_far_below_bypass():
    _, denoiser, model, _, y = _denoise_setup()
    common = dict(
        plan=make_plan(SCHED, nfe=8),
        guidance=GuidanceSpec(),
        seed=6,
        record_trajectory=True,
        band_radius=4.0,
    )
    _, traj_masked = nfcds_restore(
        y, model, denoiser, SamplerConfig(mask=MASK4, **common), SCHED
    )
    _, traj_bypass = nfcds_restore(
        y, model, denoiser, SamplerConfig(mask=bypass_mask(), **common), SCHED
    )
    masked = np.mean([r.noise_low_energy for r in traj_masked.records[:-1]])
    unmasked = np.mean([r.noise_low_energy for r in traj_bypass.records[:-1]])
    assert masked < 0.01 * unmasked


# ---------------------------------------------------------------------------
# restoration shapes and the ablation suite
# ---------------------------------------------------------------------------


def test_downsample_restoration_infers_highres_shape():
    rng = np.random.Generator(np.random.Philox(31))
    x0 = rng.standard_normal((16, 16))
    model = DegradationModel(operator=Downsample(factor=2, antialias_kernel=box_kernel(2)), sigma_y=0.0)
    y = apply(model, x0)
    assert y.shape == (8, 8)
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=3),
        mask=bypass_mask(),
        guidance=GuidanceSpec(solver="cg"),
        seed=1,
    )
    prior = _prior(16, 16)
    out, _ = nfcds_restore(y, model, AnalyticGaussianDenoiser(prior), cfg, SCHED)
    assert out.shape == (16, 16)
    assert np.all(np.isfinite(out))


def test_multichannel_blur_restoration_smoke():
    rng = np.random.Generator(np.random.Philox(32))
    x0 = rng.standard_normal((12, 12, 3))
    model = DegradationModel(operator=CircularBlur(kernel=gaussian_kernel(5, 1.0)), sigma_y=0.05)
    y = synthesize_measurement(model, x0, seed=8)
    cfg = SamplerConfig(
        plan=make_plan(SCHED, nfe=5), mask=MASK4, guidance=GuidanceSpec(), seed=8
    )
    prior = _prior(12, 12)
    denoiser = OracleDenoiser(x0)
    out, _ = nfcds_restore(y, model, denoiser, cfg, SCHED)
    assert out.shape == (12, 12, 3)
    assert np.all(np.isfinite(out))


def test_run_ablation_suite_rows_and_trajectories():
    prior, denoiser, model, x0, y = _denoise_setup()
    plan = make_plan(SCHED, nfe=5)
    base = dict(plan=plan, guidance=GuidanceSpec(), seed=3, band_radius=4.0)
    configs = {
        "baseline": SamplerConfig(mask=bypass_mask(), **base),
        "filtered": SamplerConfig(mask=MASK4, **base),
        "zero_low": SamplerConfig(
            mask=bypass_mask(), ablation=AblationSpec(mode="zero_low", cutoff=4.0), **base
        ),
    }
    report = run_ablation_suite(denoiser, configs, SCHED, model=model, y=y, reference=x0)
    assert [e.name for e in report.entries] == ["baseline", "filtered", "zero_low"]
    rows = report.summary_rows()
    per_config = {name: 0 for name in configs}
    for name, metric, value in rows:
        per_config[name] += 1
        assert math.isfinite(value), (name, metric)
    assert set(per_config.values()) == {5}  # residual, two band errors, psnr, ssim
    for entry in report.entries:
        assert len(entry.trajectory) == 5


def test_run_ablation_suite_empty_and_generation_configs():
    prior = _prior(12, 12)
    denoiser = AnalyticGaussianDenoiser(prior)
    assert run_ablation_suite(denoiser, {}, SCHED).summary_rows() == []

    gen = SamplerConfig(
        plan=make_plan(SCHED, nfe=4),
        mask=bypass_mask(),
        seed=2,
        shape=(12, 12),
        band_radius=3.0,
    )
    report = run_ablation_suite(denoiser, {"gen": gen}, SCHED)
    assert len(report.entries) == 1
    assert len(report.entries[0].trajectory) == 4
    # no measurement and no reference: only the nan-able metrics appear
    names = [metric for _, metric, _ in report.summary_rows()]
    assert "psnr" not in names


# ---------------------------------------------------------------------------
# configuration validation
# ---------------------------------------------------------------------------


def test_generation_rejects_guidance_and_missing_shape():
    prior = _prior(8, 8)
    denoiser = AnalyticGaussianDenoiser(prior)
    plan = make_plan(SCHED, nfe=2)
    with_guidance = SamplerConfig(plan=plan, mask=bypass_mask(), guidance=GuidanceSpec(), shape=(8, 8))
    with pytest.raises(ConfigError, match="guidance"):
        generate(denoiser, with_guidance, SCHED)
    no_shape = SamplerConfig(plan=plan, mask=bypass_mask())
    with pytest.raises(ConfigError, match="shape"):
        generate(denoiser, no_shape, SCHED)


def test_restoration_requires_guidance_spec():
    _, denoiser, model, _, y = _denoise_setup()
    cfg = SamplerConfig(plan=make_plan(SCHED, nfe=2), mask=bypass_mask())
    with pytest.raises(ConfigError, match="guidance"):
        nfcds_restore(y, model, denoiser, cfg, SCHED)


def test_config_rejects_contradictory_controls():
    plan = make_plan(SCHED, nfe=2)
    with pytest.raises(ConfigError, match="mutually exclusive"):
        SamplerConfig(plan=plan, mask=MASK4, ablation=AblationSpec(mode="zero_low", cutoff=4.0))
    with pytest.raises(ConfigError, match="filter_fresh_only"):
        SamplerConfig(plan=plan, mask=bypass_mask(), filter_fresh_only=True)
    with pytest.raises(ConfigError, match="record_full"):
        SamplerConfig(plan=plan, mask=bypass_mask(), record_full=True)
    with pytest.raises(ConfigError, match="seed"):
        SamplerConfig(plan=plan, mask=bypass_mask(), seed=-1)
    with pytest.raises(ConfigError, match="shape"):
        SamplerConfig(plan=plan, mask=bypass_mask(), shape=(0, 8))


def test_ablation_spec_validation():
    with pytest.raises(ConfigError, match="unknown ablation mode"):
        AblationSpec(mode="nope", cutoff=4.0)
    with pytest.raises(ConfigError, match="cutoff"):
        AblationSpec(mode="zero_low", cutoff=0.0)
    with pytest.raises(ConfigError, match="step index"):
        AblationSpec(mode="cut_low_after", cutoff=4.0)
    with pytest.raises(ConfigError, match="no step index"):
        AblationSpec(mode="zero_high", cutoff=4.0, step=2)


def test_shape_and_reference_mismatches_rejected():
    _, denoiser, model, x0, y = _denoise_setup()
    plan = make_plan(SCHED, nfe=2)
    conflicting = SamplerConfig(plan=plan, mask=bypass_mask(), guidance=GuidanceSpec(), shape=(8, 8))
    with pytest.raises(ConfigError, match="conflicts"):
        nfcds_restore(y, model, denoiser, conflicting, SCHED)
    bad_ref = SamplerConfig(
        plan=plan, mask=bypass_mask(), guidance=GuidanceSpec(), reference=np.zeros((4, 4))
    )
    with pytest.raises(ConfigError, match="reference"):
        nfcds_restore(y, model, denoiser, bad_ref, SCHED)
