import numpy as np
import pytest
from scipy import stats

from zrpflux.common.exceptions import ParameterError, ResolutionError
from zrpflux.sampler import make_mollifier, make_neumann_bump, make_zero
from zrpflux.she import (
    SHEConfig,
    advance,
    boundary_field,
    check_resolution,
    fbm_covariance,
    make_grid,
    record_trajectory,
    run_she_ensemble,
)
from zrpflux.stats import compare_ensembles, covariance_fit, dyadic_times


@pytest.mark.parametrize("scheme", ["cn", "explicit"])
def test_zero_noise_keeps_zero(rng, scheme):
    grid = make_grid(1.0, 0.05, 1e-3, 2.0, scheme=scheme, noise_scale=0.0)
    advance(grid, 0.1, rng)
    assert np.all(grid.values == 0.0)
    assert grid.t == pytest.approx(0.1)


@pytest.mark.parametrize("scheme", ["cn", "explicit"])
def test_heat_flow_preserves_constants_and_mass(rng, scheme):
    grid = make_grid(1.0, 0.05, 1e-3, 2.0, scheme=scheme, noise_scale=0.0)
    grid.values = np.full(grid.cells, 3.0)
    advance(grid, 0.05, rng)
    np.testing.assert_allclose(grid.values, 3.0, rtol=1e-12)

    grid.values = rng.normal(size=grid.cells)
    mass = grid.mass()
    spread = grid.values.std()
    advance(grid, 0.1, rng)
    assert grid.mass() == pytest.approx(mass, abs=1e-10)
    assert grid.values.std() < spread


def test_grid_parameter_errors(rng):
    with pytest.raises(ParameterError):
        make_grid(1.0, 0.1, 0.01, 2.0, scheme="explicit")
    with pytest.raises(ParameterError):
        make_grid(1.0, 0.1, 0.001, 2.0, scheme="leapfrog")
    with pytest.raises(ParameterError):
        make_grid(1.0, 0.1, 0.001, 2.0, init="random")
    with pytest.raises(ParameterError):
        make_grid(1.0, 0.1, 0.001, 2.0, init="stationary")
    with pytest.raises(ParameterError):
        make_grid(1.0, 1.5, 0.001, 2.0)


def test_stationary_initial_datum(rng):
    b = 2.0
    grid = make_grid(b, 0.05, 1e-3, 4.0, rng=rng, replicas=4000, init="stationary")
    # X_0 = -B/b, so the variance at the cell centre x is x / b^2
    var = grid.values.var(axis=1)
    centers = grid.centers
    for i in (9, 39, 79):
        assert var[i] == pytest.approx(centers[i] / b**2, rel=0.1)


def test_noise_variance_short_time(rng):
    f = make_neumann_bump(width=1.0)
    grid = make_grid(1.0, 0.02, 1e-4, 2.0, replicas=2000)
    advance(grid, 1e-3, rng)
    X = grid.pair(f)
    assert X.var(ddof=1) == pytest.approx(2e-3 * f.l2_norm_sq(), rel=0.1)


def test_mollifier_resolution(rng):
    check_resolution(0.01, make_mollifier(0.02))
    with pytest.raises(ResolutionError):
        check_resolution(0.1, make_mollifier(0.15))
    traj = record_trajectory(make_grid(1.0, 0.1, 1e-3, 2.0), [0.01], rng)
    with pytest.raises(ResolutionError):
        boundary_field(traj, make_mollifier(0.1))


def test_boundary_field_of_zero_datum(rng):
    grid = make_grid(1.0, 0.01, 1e-3, 1.0, noise_scale=0.0)
    traj = record_trajectory(grid, [0.01, 0.02], rng)
    assert np.all(boundary_field(traj, make_mollifier(0.05)) == 0.0)


def test_fbm_covariance_values():
    assert fbm_covariance(4.0, 1.0, 0.25) == pytest.approx(0.633975, abs=1e-6)
    assert fbm_covariance(1.0, 1.0, 0.25) == pytest.approx(1.0)
    assert fbm_covariance(1.0, 0.0, 0.25) == 0.0
    t = np.array([1.0, 2.0, 4.0])
    K = fbm_covariance(t[:, None], t[None, :], 0.25, scale=3.0)
    np.testing.assert_allclose(K, K.T)
    np.testing.assert_allclose(np.diag(K), 3.0 * np.sqrt(t))
    with pytest.raises(ParameterError):
        fbm_covariance(1.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        fbm_covariance(-1.0, 1.0, 0.5)


def test_batches_are_reproducible():
    config = SHEConfig(b=1.0, h=0.05, dt=1e-3, domain_len=2.0, batch=4)
    f = make_neumann_bump(width=0.5)
    small = run_she_ensemble(config, [f], [0.01, 0.02], 5, 4)
    large = run_she_ensemble(config, [f], [0.01, 0.02], 5, 8)
    assert large.series[f.name].shape == (8, 2)
    np.testing.assert_array_equal(small.series[f.name], large.series[f.name][:4])


def test_ensemble_with_mollifier_and_zero_observable():
    config = SHEConfig(b=1.0, h=0.01, dt=1e-3, domain_len=1.0, batch=3)
    moll = make_mollifier(0.05)
    zero = make_zero()
    ens = run_she_ensemble(config, [zero], [0.0, 0.01], 9, 5, [moll])
    assert np.all(ens.series[zero.name] == 0.0)
    boundary = ens.boundary[moll.as_test_function().name]
    assert boundary.shape == (5, 2)
    assert np.all(boundary[:, 0] == 0.0)
    assert np.all(boundary[:, 1] != 0.0)


@pytest.mark.slow
def test_boundary_variance_grows_like_sqrt_t():
    times = dyadic_times(0.01, 8)
    config = SHEConfig(b=1.0, h=0.01, dt=1e-4, domain_len=6.0, batch=128)
    moll = make_mollifier(0.02)
    ens = run_she_ensemble(config, [], times, 3, 256, [moll])
    var = ens.boundary[moll.as_test_function().name].var(axis=0, ddof=1)
    slope = np.polyfit(np.log(times), np.log(var), 1)[0]
    assert slope == pytest.approx(0.5, abs=0.05)


@pytest.mark.slow
def test_field_is_gaussian():
    f = make_neumann_bump(width=2.0)
    config = SHEConfig(b=1.0, h=1.0 / 32, dt=5e-4, init="stationary", batch=500)
    x = run_she_ensemble(config, [f], [0.1], 4, 4000).series[f.name][:, 0]
    assert stats.normaltest(x).pvalue > 1e-3
    assert abs(stats.skew(x)) < 0.15
    assert abs(stats.kurtosis(x)) < 0.3


@pytest.mark.slow
def test_variance_is_stable_under_grid_refinement():
    f = make_neumann_bump(width=2.0)
    times = [0.05, 0.1]
    coarse = SHEConfig(b=1.0, h=1.0 / 16, dt=1e-3, domain_len=5.0, init="stationary", batch=500)
    fine = SHEConfig(b=1.0, h=1.0 / 32, dt=5e-4, domain_len=5.0, init="stationary", batch=500)
    a = run_she_ensemble(coarse, [f], times, 6, 4000)
    b = run_she_ensemble(fine, [f], times, 7, 4000)
    report = compare_ensembles(a.series, b.series, times, {f.name: f}, tolerance=0.05)
    assert len(report.rows) == 3
    assert report.passed


@pytest.mark.slow
def test_boundary_covariance_has_the_fbm_shape():
    t0 = 0.05
    times = [0.0, t0, 2 * t0, 4 * t0]
    config = SHEConfig(b=1.0, h=0.01, dt=2.5e-4, domain_len=5.0, init="stationary", batch=256)
    moll = make_mollifier(0.04)
    ens = run_she_ensemble(config, [], times, 8, 2048, [moll])
    field = ens.boundary[moll.as_test_function().name]
    # the stationary start makes the increments of X_t(phi_eps) an fBM
    increments = field[:, 1:] - field[:, [0]]
    fit = covariance_fit(increments, times[1:], 0.25, resamples=200, rng=np.random.default_rng(3))
    assert fit.residual < 0.1
    assert fit.scale > 0
    wrong = covariance_fit(increments, times[1:], 0.5, resamples=50, rng=np.random.default_rng(3))
    assert wrong.residual > fit.residual
