import numpy as np
import pytest

from zrpflux.common.exceptions import DegeneracyError, ParameterError, SpecError
from zrpflux.engine.ensemble import j0_matrix, run_ensemble
from zrpflux.params import ProcessParams
from zrpflux.sampler import make_boundary_bump, make_bump, make_neumann_bump, make_zero, sample_geometric
from zrpflux.she import SHEConfig
from zrpflux.stats import (
    ParticleRunSpec,
    SHERunSpec,
    bootstrap_coverage,
    chi_square_geometric,
    compare_ensembles,
    compare_models,
    covariance_fit,
    crossover_time,
    dyadic_times,
    fbm_paths,
    hurst_estimate,
    scaling_window,
)


@pytest.mark.parametrize("H", [0.25, 0.5])
def test_hurst_of_exact_fbm(rng, H):
    times = dyadic_times(1e-3, 8)
    Y = fbm_paths(times, H, 2000, rng)
    est = hurst_estimate(Y, times, resamples=200, rng=rng)
    assert est.H == pytest.approx(H, abs=0.02)
    assert est.ci[0] < est.H < est.ci[1]
    assert not est.flagged


def test_hurst_flags_small_ensembles(rng):
    times = dyadic_times(1e-3, 8)
    est = hurst_estimate(fbm_paths(times, 0.25, 50, rng), times, resamples=100, rng=rng)
    assert est.flagged
    assert est.replicas == 50


def test_hurst_degenerate_inputs(rng):
    times = dyadic_times(1e-3, 8)
    with pytest.raises(DegeneracyError):
        hurst_estimate(np.ones((10, 8)), times)
    with pytest.raises(DegeneracyError):
        hurst_estimate(fbm_paths(times, 0.25, 1, rng), times)
    short = dyadic_times(1e-3, 4)
    with pytest.raises(ParameterError):
        hurst_estimate(fbm_paths(short, 0.25, 10, rng), short)
    with pytest.raises(ParameterError):
        hurst_estimate(np.ones((10, 3)), times)


def test_covariance_fit_recovers_scale(rng):
    times = dyadic_times(1.0, 3)
    Y = fbm_paths(times, 0.25, 8000, rng, scale=2.0)
    fit = covariance_fit(Y, times, 0.25, resamples=200, rng=rng)
    assert fit.scale == pytest.approx(2.0, rel=0.05)
    assert fit.residual < 0.1
    assert fit.scale_ci[0] < fit.scale < fit.scale_ci[1]
    assert not fit.flagged


def test_covariance_fit_detects_wrong_shape(rng):
    times = dyadic_times(1.0, 6)
    Y = fbm_paths(times, 0.25, 2000, rng)
    good = covariance_fit(Y, times, 0.25, resamples=50, rng=rng)
    bad = covariance_fit(Y, times, 0.75, resamples=50, rng=rng)
    assert bad.residual > 0.1
    assert bad.residual > good.residual


def test_covariance_fit_single_replica(rng):
    times = dyadic_times(1.0, 3)
    fit = covariance_fit(fbm_paths(times, 0.25, 1, rng), times, 0.25)
    assert fit.scale_ci == (-np.inf, np.inf)
    assert fit.flagged


def test_covariance_fit_needs_three_times(rng):
    with pytest.raises(ParameterError):
        covariance_fit(np.ones((10, 3)), [1.0, 1.0, 2.0], 0.25)


def test_fbm_synthesis_limits(rng):
    with pytest.raises(ParameterError):
        fbm_paths([0.0, 1.0], 0.25, 10, rng)
    with pytest.raises(ParameterError):
        fbm_paths(np.arange(1, 2050), 0.25, 1, rng)


def test_chi_square_geometric(rng):
    draws = sample_geometric(0.8, 100_000, rng)
    assert chi_square_geometric(draws, 0.8).p_value > 1e-3
    assert chi_square_geometric(draws, 0.7).p_value < 1e-6
    assert chi_square_geometric(np.zeros(100), 0.0).p_value == 1.0


def test_compare_ensembles_requires_same_observables():
    with pytest.raises(SpecError):
        compare_ensembles({"a": np.zeros((4, 1))}, {"b": np.zeros((4, 1))}, [0.1], {})


def test_compare_ensembles_zero_observable():
    zero = make_zero()
    Y = np.zeros((10, 2))
    report = compare_ensembles({zero.name: Y}, {zero.name: Y}, [0.1, 0.2], {zero.name: zero})
    assert len(report.rows) == 3
    assert all(r.discrepancy == 0.0 for r in report.rows)
    assert report.passed


def test_compare_ensembles_asserts_neumann_observables_only(rng):
    neumann, boundary = make_neumann_bump(width=1.0), make_boundary_bump(width=1.0)
    a, b = rng.normal(size=(400, 1)), rng.normal(size=(400, 1))
    particle = {neumann.name: a, boundary.name: 5 * a}
    she = {neumann.name: b, boundary.name: b}
    obs = {neumann.name: neumann, boundary.name: boundary}
    report = compare_ensembles(particle, she, [0.1], obs, tolerance=0.3)
    assert report.passed
    assert report.flagged == [boundary.name]

    report = compare_ensembles({neumann.name: 5 * a}, {neumann.name: b}, [0.1], {neumann.name: neumann})
    assert not report.passed


def test_compare_models_requires_matching_runs():
    f, g = make_neumann_bump(width=1.0), make_neumann_bump(width=0.5)
    params = ProcessParams(n=4, b=1.0, horizon=0.01, lattice_len=40)
    she = SHEConfig(b=1.0, h=0.05, dt=1e-3)
    with pytest.raises(SpecError):
        compare_models(ParticleRunSpec(params, [f], [0.01], 4, 1), SHERunSpec(she, [g], [0.01], 4, 2))
    with pytest.raises(SpecError):
        compare_models(ParticleRunSpec(params, [f], [0.01], 4, 1), SHERunSpec(she, [f], [0.005], 4, 2))


def test_scaling_window_starts_past_the_crossover():
    params = ProcessParams(n=16, b=4.0, horizon=1.0)
    assert params.rho_n == pytest.approx(3.0)
    assert crossover_time(params) == pytest.approx(8.0 / 16**4)
    times = scaling_window(params, count=8, depth=36.0)
    assert times[0] == pytest.approx(36 * 8.0 / 16**4)
    assert np.log10(times[-1] / times[0]) > 2
    # a denser system needs longer before the sqrt(t) law sets in
    assert crossover_time(ProcessParams(n=16, b=1.0)) > crossover_time(params)


@pytest.mark.slow
def test_bootstrap_coverage():
    report = bootstrap_coverage(200, dyadic_times(1e-3, 8), 0.25, 256, 17, level=0.9, resamples=1000)
    assert 0.85 <= report.coverage <= 0.95


@pytest.mark.slow
def test_particle_current_hurst_index():
    params = ProcessParams(n=16, b=4.0, horizon=0.6, lattice_len=256)
    times = scaling_window(params)
    trajectories = run_ensemble(params, times, [], master_seed=16, replicas=256, workers=4)
    J = j0_matrix(trajectories, params.n**-1.5)
    assert J.shape == (256, len(times))
    est = hurst_estimate(J, times, rng=np.random.default_rng(4))
    assert est.H == pytest.approx(0.25, abs=0.05)
    assert est.contains(0.25)


@pytest.mark.slow
def test_particle_and_she_variances_agree():
    n, times = 16, [0.05, 0.1, 0.2]
    f = make_bump(center=1.5, width=1.0, n=n)
    params = ProcessParams(n=n, b=1.0, horizon=0.2)
    she = SHEConfig(b=1.0, h=1.0 / 32, dt=5e-4, init="stationary", batch=256)
    report = compare_models(
        ParticleRunSpec(params, [f], times, 128, 21, workers=4),
        SHERunSpec(she, [f], times, 1024, 22),
        tolerance=0.1,
    )
    variances = [r for r in report.rows if r.t == r.s]
    assert len(variances) == 3
    assert all(r.within(0.1) for r in variances)
    assert report.passed
