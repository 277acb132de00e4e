import numpy as np
import pytest
import scipy.sparse as sp

from zrpflux.common.exceptions import ParameterError, ProjectionError, SingularityError, SizeError
from zrpflux.exact import (
    build_small_system,
    generator_symmetry_defect,
    h_minus_one_norm,
    psi_conditional,
    spectral_gap,
    verify_gap_bound,
)
from zrpflux.exact.cache import ResultCache
from zrpflux.exact.small_system import SmallSystem, gap_grid, solve_poisson
from zrpflux.exact.states import count_states, enumerate_states, rank_state, unrank_state


def test_state_count_and_order():
    states = enumerate_states(2, 2)
    assert states.tolist() == [[2, 0], [1, 1], [0, 2]]
    assert count_states(2, 3) == 6
    assert len(enumerate_states(3, 4)) == count_states(3, 4) == 20
    assert np.all(enumerate_states(3, 4).sum(axis=1) == 3)


def test_rank_and_unrank_are_inverse():
    states = enumerate_states(4, 4)
    for i, eta in enumerate(states):
        assert rank_state(eta) == i
        assert unrank_state(i, 4, 4).tolist() == eta.tolist()
    with pytest.raises(ParameterError):
        unrank_state(len(states), 4, 4)


def test_two_site_generator():
    sys = build_small_system(1, 2)
    assert sys.dense().tolist() == [[-1.0, 1.0], [1.0, -1.0]]
    assert np.allclose(sys.apply(np.ones(sys.size)), 0.0)


def test_known_gaps():
    assert spectral_gap(build_small_system(1, 2)) == pytest.approx(2.0, abs=1e-12)
    assert spectral_gap(build_small_system(1, 3)) == pytest.approx(1.0, abs=1e-12)
    assert spectral_gap(build_small_system(0, 4)) is None
    assert spectral_gap(build_small_system(5, 1)) is None


def test_gap_table_and_kappa():
    table = verify_gap_bound([(1, 2), (1, 3), (0, 3)])
    assert [(r.k, r.l) for r in table.rows] == [(1, 2), (1, 3)]
    assert table.rows[0].gap_times_klsq == pytest.approx(18.0)
    assert table.kappa0 == pytest.approx(1 / 16)
    assert table.all_positive


def test_gap_grid_is_positive():
    table = verify_gap_bound(gap_grid(6, 4))
    assert table.all_positive
    assert all(r.gap_times_klsq > 0.1 for r in table.rows)


def test_gap_cache(tmp_path):
    calls = []

    def compute():
        calls.append(1)
        return 2.0

    cache = ResultCache(str(tmp_path), version="one")
    assert cache.cached_function_call(("gap", 1, 2), compute) == 2.0
    assert cache.cached_function_call(("gap", 1, 2), compute) == 2.0
    assert len(calls) == 1
    cache.close()

    stale = ResultCache(str(tmp_path), version="two")
    stale.cached_function_call(("gap", 1, 2), compute)
    assert len(calls) == 2
    stale.close()

    cache = ResultCache(str(tmp_path), version="three")
    table = verify_gap_bound([(2, 3)], cache)
    assert cache.cache.get("gap::2::3")["data"] == pytest.approx(table.rows[0].gap)
    cache.close()


def test_generator_is_symmetric(rng):
    sys = build_small_system(3, 4)
    f, g = rng.normal(size=sys.size), rng.normal(size=sys.size)
    assert generator_symmetry_defect(sys, f, g) < 1e-12
    assert sys.dirichlet_form(f) > 0
    assert sys.graph.connected


def test_state_and_dense_caps():
    with pytest.raises(SizeError):
        build_small_system(30, 10)
    with pytest.raises(SizeError):
        build_small_system(14, 6).dense()


@pytest.mark.parametrize("k, l, expected", [(0, 3, 0.0), (1, 2, 0.5), (2, 2, 2 / 3)])
def test_psi_values(k, l, expected):
    value = psi_conditional(k, l)
    assert value.formula == pytest.approx(expected, abs=1e-15)
    assert value.enumeration == pytest.approx(expected, abs=1e-15)


def test_psi_formula_matches_enumeration():
    worst = max(psi_conditional(k, l).discrepancy for k in range(21) for l in range(2, 7))
    assert worst < 1e-12


def test_psi_needs_two_sites():
    with pytest.raises(ParameterError):
        psi_conditional(3, 1)


def test_h_minus_one_two_sites():
    sys = build_small_system(1, 2)
    value = h_minus_one_norm(sys, np.array([1.0, -1.0]))
    assert value.poisson == pytest.approx(0.5, abs=1e-12)
    assert value.variational == pytest.approx(0.5, abs=1e-8)


def test_h_minus_one_of_zero():
    sys = build_small_system(2, 3)
    assert h_minus_one_norm(sys, np.zeros(sys.size), cross_check=False).poisson == 0.0


def test_h_minus_one_cross_check(rng):
    sys = build_small_system(2, 4)
    f = rng.normal(size=sys.size)
    f -= f.mean()
    value = h_minus_one_norm(sys, f)
    assert value.poisson > 0
    assert value.discrepancy < 1e-6 * value.poisson
    u = solve_poisson(sys, f)
    np.testing.assert_allclose(-sys.apply(u), f, atol=1e-10)


def test_h_minus_one_needs_mean_zero():
    with pytest.raises(ProjectionError):
        h_minus_one_norm(build_small_system(1, 2), np.array([1.0, 0.0]))


def test_disconnected_state_space():
    sys = SmallSystem(1, 2, np.array([[1, 0], [0, 1]]), sp.csr_matrix((2, 2)))
    assert not sys.graph.connected
    with pytest.raises(SingularityError):
        h_minus_one_norm(sys, np.array([1.0, -1.0]))
