import pickle

import numpy as np
import pytest
from scipy import integrate

from zrpflux.common.exceptions import ParameterError
from zrpflux.params import ProcessParams
from zrpflux.sampler import (
    make_boundary_bump,
    make_bump,
    make_mollifier,
    make_neumann_bump,
    make_test_function,
    make_zero,
    sample_geometric,
    sample_invariant,
    spawn_streams,
)
from zrpflux.stats import chi_square_geometric


def test_streams_depend_only_on_seed_and_index():
    a = spawn_streams(5, 3)[1].random(4)
    b = spawn_streams(5, 1, start=1)[0].random(4)
    c = spawn_streams(6, 3)[1].random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_invariant_is_reproducible():
    params = ProcessParams(n=10, b=1.0, lattice_len=50)
    x = sample_invariant(params, spawn_streams(3, 1)[0])
    y = sample_invariant(params, spawn_streams(3, 1)[0])
    np.testing.assert_array_equal(x.eta, y.eta)


def test_zero_lambda_gives_empty_configuration(rng):
    params = ProcessParams(n=2, b=2.0, lattice_len=30)
    assert params.lambda_n == 0.0
    assert sample_invariant(params, rng).total == 0


def test_geometric_parameter_range(rng):
    with pytest.raises(ParameterError):
        sample_geometric(1.0, 10, rng)


def test_geometric_mean_and_law(rng):
    lam = 0.9
    draws = sample_geometric(lam, 1_000_000, rng)
    se = np.sqrt(lam / (1 - lam) ** 2 / len(draws))
    assert abs(draws.mean() - 9.0) < 3 * se
    assert chi_square_geometric(draws, lam, kmax=60).p_value > 1e-3


def test_bump_mass_matches_quadrature():
    f = make_bump(center=1.5, width=1.0)
    oracle, _ = integrate.quad(lambda x: float(f.f(np.array([x]))[0]), 1.0, 2.0, epsabs=1e-14, limit=200)
    assert f.mass() == pytest.approx(oracle, abs=1e-10)
    assert f.neumann_ok
    assert float(f.df(np.array([0.0]))[0]) == 0.0


def test_F_is_antiderivative(bump):
    x = np.linspace(1.05, 1.95, 37)
    h = 1e-4
    fd = (bump.F(x + h) - bump.F(x - h)) / (2 * h)
    np.testing.assert_allclose(fd, bump.f(x), atol=1e-5)
    assert np.all(bump.F(np.array([2.0, 2.5, 10.0])) == 0.0)
    assert bump.F(np.array([0.0]))[0] == pytest.approx(-bump.mass())


def test_bump_errors():
    with pytest.raises(ParameterError):
        make_bump(center=1.0, width=0.0)
    with pytest.raises(ParameterError):
        make_bump(center=0.2, width=1.0)


def test_neumann_and_boundary_profiles():
    assert make_neumann_bump(width=1.0).neumann_ok
    boundary = make_boundary_bump(width=1.0)
    assert boundary.profile == "boundary_bump"
    assert not boundary.neumann_ok


def test_zero_function():
    zero = make_zero()
    x = np.linspace(0, 3, 7)
    assert np.all(zero.f(x) == 0)
    assert np.all(zero.F(x) == 0)
    assert zero.neumann_ok


def test_make_test_function_by_name():
    f = make_test_function("bump", {"center": 1.5, "width": 1.0})
    assert f.name == "bump(amplitude=1.0,center=1.5,width=1.0)"
    with pytest.raises(ParameterError):
        make_test_function("triangle", {})


def test_test_functions_survive_pickling(bump):
    clone = pickle.loads(pickle.dumps(bump))
    x = np.linspace(0, 2.5, 11)
    assert clone.name == bump.name
    np.testing.assert_allclose(clone.F(x), bump.F(x))


@pytest.mark.parametrize("eps", [0.5, 0.05, 1e-3])
def test_mollifier_invariants(eps):
    moll = make_mollifier(eps)
    assert float(moll.h(np.array([0.0]))[0]) == pytest.approx(1.0, abs=1e-12)
    assert float(moll.h(np.array([2 * eps]))[0]) == 0.0
    mass, _ = integrate.quad(lambda x: float(moll.phi(np.array([x]))[0]), 0.0, eps, epsabs=1e-13, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert np.all(moll.phi(np.linspace(-1, 2, 301) * eps) >= 0)


def test_mollifier_approximates_delta_at_zero():
    moll = make_mollifier(1e-3)
    value, _ = integrate.quad(
        lambda x: float((1 + x) * moll.phi(np.array([x]))[0]), 0.0, 1e-3, epsabs=1e-13
    )
    assert value == pytest.approx(1.0, abs=1e-3)


def test_mollifier_width_must_be_positive():
    with pytest.raises(ParameterError):
        make_mollifier(0.0)
