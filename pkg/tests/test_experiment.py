import math
import warnings

import numpy as np
import pytest

from amplitude_spde.errors import DomainError, ExperimentAborted, FitError
from amplitude_spde.experiment import (
    ErrorReport, ExperimentConfig, emit_report, fit_convergence_order, read_config_file, read_report,
    run_comparison,
)
from amplitude_spde.model import allen_cahn_model

SMALL = dict(n_samples=6, n_modes=16, n_quad=64, slow_dt=2e-3, T0=0.2, n_snapshots=10, n_bootstrap=50)


def test_config_validation():
    with pytest.raises(DomainError):
        ExperimentConfig(epsilon_list=(0.05, 0.1))
    with pytest.raises(DomainError):
        ExperimentConfig(kappa=0.05)
    with pytest.raises(DomainError):
        ExperimentConfig(n_samples=0)
    with pytest.raises(DomainError):
        ExperimentConfig(case_tag="III")
    with pytest.raises(DomainError):
        ExperimentConfig(coupling="fresh")
    assert ExperimentConfig(case_tag="2").case_tag == "CaseII"
    assert ExperimentConfig().n_samples == 100


def test_grid_choices():
    cfg = ExperimentConfig(slow_dt=1e-3, T0=1.0)
    assert cfg.grid(0.1) == (pytest.approx(0.1), 1000)
    fixed = cfg.replace(dt=0.5)
    assert fixed.grid(0.1) == (0.5, 200)
    with pytest.raises(DomainError):
        cfg.replace(dt=1e-6).grid(0.001)


@pytest.mark.parametrize("power", [2.0, 3.0])
def test_fit_exact_power_law(power):
    eps = [0.1, 0.05, 0.025, 0.0125]
    fit = fit_convergence_order({e: 0.7 * e**power for e in eps})
    assert fit.slope == pytest.approx(power, abs=1e-12)
    assert fit.ci_low <= fit.slope <= fit.ci_high
    assert fit.intercept == pytest.approx(math.log(0.7), abs=1e-12)


def test_fit_excludes_bad_points():
    data = {0.1: 1e-2, 0.05: 2.5e-3, 0.025: 6.25e-4, 0.0125: 0.0}
    with pytest.warns(RuntimeWarning):
        fit = fit_convergence_order(data)
    assert fit.excluded == (0.0125,)
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(FitError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit_convergence_order({0.1: 1.0, 0.05: -1.0, 0.025: 0.5})


def test_fit_bootstrap_interval():
    rng = np.random.default_rng(0)
    eps = [0.1, 0.05, 0.025]
    samples = {e: e**2 * (1 + 0.1 * rng.standard_normal((5, 40))) for e in eps}
    sups = {e: float(np.max(samples[e].mean(axis=1))) for e in eps}
    fit = fit_convergence_order(sups, samples, n_bootstrap=200)
    assert fit.ci_low <= fit.slope <= fit.ci_high
    assert fit.ci_high - fit.ci_low < 0.3


def test_trivial_zero_error():
    base = allen_cahn_model(20.0, n_modes=16, n_quad=64)
    model = base.replace(cubic_coeff=0.0, linear_scale=0.0).with_noise(np.zeros_like(base.grid.x))
    cfg = ExperimentConfig(epsilon_list=(0.1,), **SMALL)
    r = run_comparison(cfg, model=model).results[0]
    assert np.all(r.mean_first == 0.0) and np.all(r.mean_second == 0.0)


@pytest.fixture(scope="module")
def small_report():
    return run_comparison(ExperimentConfig(epsilon_list=(0.1, 0.05, 0.025), **SMALL))


def test_report_shape(small_report):
    assert len(small_report.results) == 3
    for r in small_report.results:
        assert r.times.size == r.mean_first.size == 11
        assert np.all(np.isfinite(r.mean_first)) and np.all(r.mean_first >= 0)
        assert r.mean_first[0] == 0.0
        assert r.n_valid == 6 and r.blowup_count == 0
        assert r.first_samples.shape == (11, 6)
    assert np.isfinite(small_report.fit_first.slope)
    assert small_report.fit_first.ci_low <= small_report.fit_first.ci_high


@pytest.mark.filterwarnings("ignore:sigma1 routes")
def test_case2_report_records_coupling():
    rep = run_comparison(ExperimentConfig(case_tag="CaseII", h=10.0, epsilon_list=(0.05,), coupling="normalized",
                                          **SMALL))
    assert rep.coupling == "normalized"
    assert rep.results[0].clamp_fraction == 0.0
    assert math.isnan(rep.fit_first.slope)


@pytest.mark.filterwarnings("ignore:sigma1 routes")
def test_k_variants_differ_in_case2():
    rep = run_comparison(ExperimentConfig(case_tag="CaseII", h=10.0, epsilon_list=(0.1,), **SMALL))
    r = rep.results[0]
    assert not np.array_equal(r.mean_first, r.mean_first_alt)


def test_emit_and_read_roundtrip(tmp_path, small_report):
    files = emit_report(small_report, tmp_path)
    assert set(files) == {"per_time", "summary", "plot"}
    header = files["per_time"].read_text().splitlines()[0]
    assert header.startswith("case,epsilon,t,T,mean_R_first,se_R_first,mean_R_second,se_R_second")
    back = read_report(tmp_path)
    assert back.case_tag == small_report.case_tag
    for a, b in zip(small_report.results, back.results):
        assert a.epsilon == b.epsilon
        for name in ("times", "slow_times", "mean_first", "se_first", "mean_second", "se_second",
                     "mean_first_alt", "mean_second_alt"):
            assert np.array_equal(getattr(a, name), getattr(b, name))
        assert (a.clamp_fraction, a.exceedance_count, a.blowup_count, a.n_valid) == (
            b.clamp_fraction, b.exceedance_count, b.blowup_count, b.n_valid)
    assert back.fit_first.slope == small_report.fit_first.slope
    assert back.fit_second.ci_high == small_report.fit_second.ci_high


def test_emit_empty_report(tmp_path):
    files = emit_report(ErrorReport("CaseI"), tmp_path)
    assert len(files["per_time"].read_text().splitlines()) == 1
    assert len(files["summary"].read_text().splitlines()) == 1
    assert read_report(tmp_path).results == []


def test_emit_single_snapshot(tmp_path):
    cfg = ExperimentConfig(epsilon_list=(0.1,), **{**SMALL, "T0": 2e-3, "n_snapshots": 1})
    rep = run_comparison(cfg)
    rep.results[0].times = rep.results[0].times[1:]
    for name in ("slow_times", "mean_first", "se_first", "mean_second", "se_second", "mean_first_alt",
                 "mean_second_alt"):
        setattr(rep.results[0], name, getattr(rep.results[0], name)[1:])
    files = emit_report(rep, tmp_path)
    assert len(files["per_time"].read_text().splitlines()) == 2


def test_reproducible_csv(tmp_path):
    cfg = ExperimentConfig(epsilon_list=(0.1, 0.05, 0.025), **SMALL)
    emit_report(run_comparison(cfg), tmp_path / "a")
    emit_report(run_comparison(cfg), tmp_path / "b")
    for name in ("per_time.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_chunking_does_not_change_results():
    cfg = ExperimentConfig(epsilon_list=(0.05,), **SMALL)
    a = run_comparison(cfg).results[0]
    b = run_comparison(cfg.replace(chunk_size=4)).results[0]
    assert np.array_equal(a.mean_first, b.mean_first)
    assert np.array_equal(a.mean_second, b.mean_second)


def test_abort_on_blowup():
    model = allen_cahn_model(1.0, n_modes=16, n_quad=64).replace(cubic_coeff=200.0)
    cfg = ExperimentConfig(epsilon_list=(0.5,), **{**SMALL, "T0": 1.0})
    with pytest.raises(ExperimentAborted):
        run_comparison(cfg, model=model)


def test_config_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# study\ncase_tag = 2\nepsilon_list = 0.1, 0.05,0.025\nh = 10\ninclude_K = off\n"
                 "n_samples = 7\ndt = auto\n")
    values = read_config_file(f)
    cfg = ExperimentConfig(**values)
    assert cfg.case_tag == "CaseII" and cfg.epsilon_list == (0.1, 0.05, 0.025)
    assert cfg.include_K is False and cfg.n_samples == 7 and cfg.dt is None
    f.write_text("bogus = 1\n")
    with pytest.raises(DomainError):
        read_config_file(f)
    f.write_text("no equals sign\n")
    with pytest.raises(DomainError):
        read_config_file(f)


@pytest.mark.slow
def test_case1_rates_in_asymptotic_regime():
    # with h = 20 the second-order noise coefficient is ~135, so the expansion needs eps << 1/135
    cfg = ExperimentConfig(case_tag="CaseI", h=20.0, epsilon_list=(0.004, 0.002, 0.001), n_samples=50,
                           n_snapshots=50, n_bootstrap=200)
    rep = run_comparison(cfg)
    assert all(r.sup_second < r.sup_first for r in rep.results)
    assert all(r.pointwise_improvement for r in rep.results)
    assert 1.7 <= rep.fit_first.slope <= 2.3
    assert 2.6 <= rep.fit_second.slope <= 3.4


@pytest.mark.slow
def test_case2_rates_in_asymptotic_regime():
    cfg = ExperimentConfig(case_tag="CaseII", h=10.0, epsilon_list=(0.01, 0.005, 0.0025), n_samples=50,
                           n_snapshots=50, n_bootstrap=200)
    rep = run_comparison(cfg)
    assert all(r.pointwise_improvement for r in rep.results)
    assert rep.fit_second.slope - rep.fit_first.slope >= 0.5
    assert 1.7 <= rep.fit_first.slope <= 2.3
