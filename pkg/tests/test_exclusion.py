import numpy as np
import pytest

from zrpflux.common.exceptions import MissingAccumulatorError, ParameterError
from zrpflux.core import Configuration, CurrentLedger
from zrpflux.engine.kmc import SOURCE
from zrpflux.engine.simulation import run
from zrpflux.engine.trajectory import EventLog, FieldSample, Trajectory
from zrpflux.exclusion import exclusion_to_zrp, tagged_displacement_check, zrp_to_exclusion
from zrpflux.params import JumpKernel, ProcessParams, set_kernel


def test_positions_from_occupations():
    assert zrp_to_exclusion(Configuration([2, 0, 0])).tolist() == [0, 3, 4, 5]
    assert zrp_to_exclusion(Configuration([0, 0]), base=-3).tolist() == [-3, -2, -1]
    assert exclusion_to_zrp([0, 3, 4, 5]).eta.tolist() == [2, 0, 0]


def test_map_round_trip(rng):
    eta = rng.geometric(0.3, size=50) - 1
    z = zrp_to_exclusion(Configuration(eta), base=7)
    assert z[0] == 7
    assert np.all(np.diff(z) >= 1)
    assert exclusion_to_zrp(z).eta.tolist() == eta.tolist()


def test_positions_must_increase():
    with pytest.raises(ParameterError):
        exclusion_to_zrp([0, 2, 2])


def test_single_creation_moves_first_particle():
    params = ProcessParams(n=4, b=1.0, lattice_len=3)
    config0 = Configuration.empty(3)
    sample = FieldSample(
        t=0.1,
        values={},
        j0=1,
        qv={},
        acc_g={},
        acc_eta={},
        checksum="",
        n_events=1,
        config=Configuration([1, 0, 0]),
        ledger=CurrentLedger(np.array([1, 0, 0, 0])),
    )
    log = EventLog(np.array([SOURCE]), np.array([0]), np.array([1]), np.array([0.5]))
    traj = Trajectory(params, config0, {}, samples=[sample], events=log)
    report = tagged_displacement_check(traj)
    assert report.passed
    assert report.multi_moves == 0


def test_no_events(small_params, rng):
    traj = run(small_params, [0.0], [], rng, record_events=True)
    report = tagged_displacement_check(traj)
    assert report.passed
    assert report.sample_times == [0.0]


def test_needs_event_log(small_params, rng):
    traj = run(small_params, [0.001], [], rng)
    with pytest.raises(MissingAccumulatorError):
        tagged_displacement_check(traj)


@pytest.mark.parametrize("record_configs", [False, True])
def test_displacement_equals_current(small_params, rng, record_configs):
    traj = run(small_params, [0.002, 0.005, 0.01], [], rng, record_events=True, record_configs=record_configs)
    assert len(traj.events) > 0
    report = tagged_displacement_check(traj, tracked=10)
    assert report.passed, report.mismatches
    assert report.sample_times == [0.002, 0.005, 0.01]
    assert report.multi_moves == 0


def test_tracking_is_capped(small_params, rng):
    traj = run(small_params, [0.002], [], rng, record_events=True)
    report = tagged_displacement_check(traj, tracked=1000)
    assert report.restricted
    assert report.tracked == small_params.L + 1
    assert report.passed


def test_kernel_jumps_move_several_particles(small_params, rng):
    params = set_kernel(small_params, JumpKernel(half={1: 0.25, 3: 0.25}))
    traj = run(params, [0.005, 0.01], [], rng, record_events=True)
    report = tagged_displacement_check(traj)
    assert report.passed, report.mismatches
    assert report.multi_moves > 0
