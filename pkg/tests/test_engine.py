import numpy as np
import pytest

from zrpflux.common.exceptions import EventBudgetExceeded, ParameterError, PreconditionError
from zrpflux.core import Configuration, check_continuity
from zrpflux.engine.ensemble import ensemble_matrix, j0_matrix, run_ensemble
from zrpflux.engine.indexed_set import IndexedSiteSet
from zrpflux.engine.simulation import SimState, event_rate_estimate, replay, run, step
from zrpflux.fields import static_term
from zrpflux.params import JumpKernel, ProcessParams, default_window, set_kernel
from zrpflux.sampler import make_bump, sample_invariant, spawn_streams
from zrpflux.stats import chi_square_geometric, compare_ensembles


def test_lambda_and_window_defaults():
    params = ProcessParams(n=10, b=1.0, horizon=0.1)
    assert params.lambda_n == pytest.approx(0.9)
    assert params.rho_n == pytest.approx(9.0)
    assert params.L == default_window(10, 1.0, 0.1) == 200
    with pytest.raises(ParameterError):
        ProcessParams(n=1, b=2.0)


def test_indexed_set_operations(rng):
    s = IndexedSiteSet(10)
    for x in (3, 7, 1, 7):
        s.add(x)
    assert len(s) == 3 and 7 in s and 2 not in s
    s.discard(3)
    s.discard(3)
    assert sorted(s) == [1, 7]
    assert s.choice(rng) in (1, 7)
    eta = np.zeros(10, dtype=np.int64)
    eta[[0, 6]] = 1
    assert s.consistent_with(eta)


def test_empty_configuration_first_event():
    params = ProcessParams(n=10, b=1.0, lattice_len=20)
    trials = 2000
    sources, waits = 0, []
    for rng in spawn_streams(11, trials):
        state = SimState(params, Configuration.empty(20), rng)
        assert state.total_activation == pytest.approx(2 * 0.9)
        step(state)
        eta = state.config.eta
        assert eta.sum() == 1 and (eta[0] == 1 or eta[-1] == 1)
        sources += int(eta[0] == 1)
        waits.append(state.micro_time)
    assert abs(sources / trials - 0.5) < 4 * np.sqrt(0.25 / trials)
    mean_wait = 1 / 1.8
    assert abs(np.mean(waits) - mean_wait) < 4 * mean_wait / np.sqrt(trials)


def test_step_without_active_clock():
    params = ProcessParams(n=2, b=2.0, lattice_len=5)
    state = SimState(params, Configuration.empty(5), spawn_streams(0, 1)[0])
    with pytest.raises(PreconditionError):
        state.step()


def test_occupied_index_tracks_configuration(small_params, rng):
    state = SimState(small_params, sample_invariant(small_params, rng), rng)
    for _ in range(500):
        state.step()
        assert state.index_consistent()
    assert state.n_events == 500
    occupied = int(np.count_nonzero(state.config.eta))
    assert state.total_activation == pytest.approx(2 * occupied + 2 * small_params.lambda_n)


def test_sample_at_time_zero_is_the_static_field(small_params, bump, rng):
    traj = run(small_params, [0.0], [bump], rng)
    sample = traj.samples[0]
    assert sample.j0 == 0
    assert sample.values[bump.name] == pytest.approx(static_term(traj.config0, small_params, bump), abs=1e-14)


def test_run_is_deterministic(small_params, bump):
    times = [0.002, 0.005, 0.01]
    a = run(small_params, times, [bump], spawn_streams(9, 1)[0])
    b = run(small_params, times, [bump], spawn_streams(9, 1)[0])
    assert [s.checksum for s in a.samples] == [s.checksum for s in b.samples]
    np.testing.assert_array_equal(a.series(bump.name), b.series(bump.name))


def test_continuity_at_every_sample_time(small_params, rng):
    traj = run(small_params, np.linspace(0.001, 0.01, 10), [], rng, record_configs=True)
    for s in traj.samples:
        assert check_continuity(traj.config0, s.config, s.ledger)


def test_sample_times_are_validated(small_params, rng):
    with pytest.raises(ParameterError):
        run(small_params, [0.02], [], rng)
    with pytest.raises(ParameterError):
        run(small_params, [0.005, 0.001], [], rng)


def test_event_budget_returns_partial_trajectory(small_params, rng):
    with pytest.raises(EventBudgetExceeded) as info:
        run(small_params, [0.001, 0.01], [], rng, max_events=50)
    partial = info.value.partial
    assert partial.partial
    assert len(partial.samples) < 2


def test_budget_spent_exactly_at_a_sample_time(small_params):
    times = [0.005, 0.01]
    full = run(small_params, times, [], spawn_streams(9, 1)[0])
    first, last = (s.n_events for s in full.samples)

    again = run(small_params, times, [], spawn_streams(9, 1)[0], max_events=last)
    assert not again.partial
    np.testing.assert_array_equal(again.j0, full.j0)

    with pytest.raises(EventBudgetExceeded) as info:
        run(small_params, times, [], spawn_streams(9, 1)[0], max_events=first)
    assert [s.j0 for s in info.value.partial.samples] == [full.samples[0].j0]


def test_event_log_replays_to_final_state(small_params, rng):
    traj = run(small_params, [0.01], [], rng, record_configs=True, record_events=True)
    final = traj.samples[-1]
    assert len(traj.events) == final.n_events
    config, ledger = replay(traj.config0, traj.events, small_params)
    np.testing.assert_array_equal(config.eta, final.config.eta)
    np.testing.assert_array_equal(ledger.J, final.ledger.J)


def test_ensemble_replicas_are_stable_under_extension(small_params):
    times = [0.005]
    full = run_ensemble(small_params, times, [], master_seed=4, replicas=3)
    tail = run_ensemble(small_params, times, [], master_seed=4, replicas=1, first_replica=2)
    assert [t.replica for t in full] == [0, 1, 2]
    assert full[2].samples[0].checksum == tail[0].samples[0].checksum
    assert j0_matrix(full).shape == (3, 1)


def test_ensemble_is_independent_of_worker_count(small_params):
    times = [0.005]
    serial = run_ensemble(small_params, times, [], master_seed=2, replicas=3, workers=1)
    pooled = run_ensemble(small_params, times, [], master_seed=2, replicas=3, workers=2)
    assert [t.samples[0].checksum for t in serial] == [t.samples[0].checksum for t in pooled]


def test_event_count_matches_compensator():
    params = ProcessParams(n=4, b=1.0, horizon=4.0, lattice_len=40)
    state = SimState(params, sample_invariant(params, spawn_streams(8, 1)[0]), spawn_streams(8, 2)[1])
    state.advance_to(params.horizon)
    G, _ = state.integrals()
    compensator = 2 * G[1:-1].sum() + 2 * params.lambda_n * state.micro_time
    assert abs(state.n_events - compensator) < 4 * np.sqrt(compensator)
    rough = params.horizon * event_rate_estimate(params, params.lambda_n)
    assert abs(state.n_events / rough - 1) < 0.3


def test_nearest_neighbour_kernel_mode_reproduces_plain_mode(small_params):
    kernel_params = set_kernel(small_params, {1: 0.5, -1: 0.5})
    assert kernel_params.jump_kernel.diffusivity_factor == pytest.approx(1.0)
    a = run(small_params, [0.01], [], spawn_streams(5, 1)[0])
    b = run(kernel_params, [0.01], [], spawn_streams(5, 1)[0])
    assert a.samples[0].checksum == b.samples[0].checksum


def test_kernel_parameters():
    kernel = JumpKernel(half={1: 0.25, 2: 0.25})
    assert kernel.sigma2 == pytest.approx(1.25)
    assert kernel.range == 2
    with pytest.raises(ParameterError):
        JumpKernel.from_mapping({1: 0.5, -1: 0.25, 2: 0.25})
    with pytest.raises(ParameterError):
        JumpKernel(half={1: 0.4})


def test_kernel_creation_rates_follow_the_tails():
    params = set_kernel(ProcessParams(n=10, b=1.0), JumpKernel(half={1: 0.25, 2: 0.25}))
    sites, cum, total = params.jump_kernel.source_table()
    rates = 2 * params.lambda_n * total * np.diff(cum, prepend=0.0)
    # an occupied site x leaves through the origin at rate 2 * tail(x)
    np.testing.assert_allclose(rates, [0.9, 0.45])
    np.testing.assert_array_equal(sites, [1, 2])
    state = SimState(params, Configuration(np.zeros(params.L, dtype=np.int64)), spawn_streams(1, 1)[0])
    assert state.total_activation == pytest.approx(2 * 1.35)


def test_kernel_mode_run_keeps_continuity(small_params, rng):
    params = set_kernel(small_params, JumpKernel(half={1: 0.25, 2: 0.25}))
    traj = run(params, [0.005, 0.01], [], rng, record_configs=True, record_events=True)
    for s in traj.samples:
        assert check_continuity(traj.config0, s.config, s.ledger, params.jump_kernel)
    config, ledger = replay(traj.config0, traj.events, params)
    np.testing.assert_array_equal(ledger.J, traj.samples[-1].ledger.J)


@pytest.mark.slow
@pytest.mark.parametrize("kernel", [None, JumpKernel(half={1: 0.25, 2: 0.25})])
def test_invariant_measure_is_stationary(kernel):
    params = ProcessParams(n=10, b=1.0, horizon=0.1, lattice_len=200, kernel=kernel)
    trajectories = run_ensemble(params, [0.1], [], master_seed=77, replicas=64, record_configs=True)
    occupancy = np.concatenate([t.samples[-1].config.eta for t in trajectories])
    assert chi_square_geometric(occupancy, params.lambda_n).p_value > 0.01


@pytest.mark.slow
def test_long_run_continuity():
    params = ProcessParams(n=8, b=1.0, horizon=0.25, lattice_len=160)
    trajectories = run_ensemble(
        params, np.linspace(0.025, 0.25, 10), [], master_seed=1, replicas=8, record_configs=True
    )
    assert sum(t.n_events for t in trajectories) > 10**6
    for traj in trajectories:
        for s in traj.samples:
            assert check_continuity(traj.config0, s.config, s.ledger)


@pytest.mark.slow
def test_doubling_the_window_leaves_statistics_unchanged():
    n, times = 8, [0.1, 0.2]
    f = make_bump(center=1.5, width=1.0, n=n)
    fields, currents = {}, {}
    for L in (32, 64):
        params = ProcessParams(n=n, b=1.0, horizon=0.2, lattice_len=L)
        trajectories = run_ensemble(params, times, [f], master_seed=L, replicas=800)
        fields[L] = {f.name: ensemble_matrix(trajectories, f.name)}
        currents[L] = j0_matrix(trajectories, n**-1.5)
    report = compare_ensembles(fields[32], fields[64], times, {f.name: f}, tolerance=0.1)
    assert report.passed
    for a, b in zip(currents[32].T, currents[64].T):
        se = np.hypot(a.var(ddof=1), b.var(ddof=1)) * np.sqrt(2 / (len(a) - 1))
        assert abs(a.var(ddof=1) - b.var(ddof=1)) < 3 * se
        assert abs(a.mean() - b.mean()) < 3 * np.hypot(a.std(), b.std()) / np.sqrt(len(a))
