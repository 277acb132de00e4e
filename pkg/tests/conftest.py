import numpy as np
import pytest

from zrpflux.params import ProcessParams
from zrpflux.sampler import make_bump, make_neumann_bump, spawn_streams


@pytest.fixture
def rng() -> np.random.Generator:
    return spawn_streams(20240601, 1)[0]


@pytest.fixture
def small_params() -> ProcessParams:
    return ProcessParams(n=4, b=1.0, horizon=0.01, lattice_len=40)


@pytest.fixture
def bump():
    return make_bump(center=1.5, width=1.0, n=4)


@pytest.fixture
def neumann_bump():
    return make_neumann_bump(width=2.0, n=4)


@pytest.fixture
def experiment_text() -> str:
    return """\
[process]
n = 4
b = 1.0
horizon = 0.004

[lattice]
length = 40

[observables]
f1 = bump center=1.5 width=1.0
f2 = neumann_bump width=2.0

[sampling]
times = 0.001, 0.002, 0.004
replicas = 3
seed = 7
"""
