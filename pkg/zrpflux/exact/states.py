"""
Stars-and-bars enumeration of the closed boxes Omega_{k,l} = {eta in N^l : sum eta = k}.

States are listed in colexicographic order: sorted by (eta[l-1], ..., eta[0]).
"""

import math
from functools import lru_cache

import numpy as np

from zrpflux.common import Defaults
from zrpflux.common.exceptions import ParameterError, SizeError


def binomial_table(top: int, width: int) -> np.ndarray:
    """B[m, j] = C(m, j) for 0 <= m <= top, 0 <= j <= width, exact in int64."""
    B = np.zeros((top + 1, width + 1), dtype=np.int64)
    B[:, 0] = 1
    for m in range(1, top + 1):
        B[m, 1:] = B[m - 1, 1:] + B[m - 1, :-1]
    return B


def count_states(k: int, l: int) -> int:
    if k < 0 or l < 1:
        raise ParameterError(f"Need k >= 0 and l >= 1, got k={k}, l={l}")
    return math.comb(k + l - 1, l - 1)


def check_size(k: int, l: int, cap: int = Defaults.STATE_CAP) -> int:
    size = count_states(k, l)
    if size > cap:
        raise SizeError(f"|Omega_{{{k},{l}}}| = {size} exceeds the state cap {cap}")
    return size


def enumerate_states(k: int, l: int, cap: int = Defaults.STATE_CAP) -> np.ndarray:
    """All occupancy vectors with l sites and k particles, one per row, in colex order."""
    check_size(k, l, cap)
    return _enumerate(k, l).copy()


@lru_cache(maxsize=256)
def _enumerate(k: int, l: int) -> np.ndarray:
    if l == 1:
        return np.array([[k]], dtype=np.int64)
    blocks = []
    for last in range(k + 1):
        head = _enumerate(k - last, l - 1)
        blocks.append(np.hstack((head, np.full((len(head), 1), last, dtype=np.int64))))
    return np.vstack(blocks)


def rank_states(states: np.ndarray, k: int, B: np.ndarray = None) -> np.ndarray:
    """
    Colex rank of each row: the number of states listed before it.
    Rows must all carry k particles.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.int64))
    l = states.shape[1]
    if B is None:
        B = binomial_table(k + l, l)
    rank = np.zeros(len(states), dtype=np.int64)
    remaining = np.full(len(states), k, dtype=np.int64)
    for j in range(l - 1, 0, -1):
        eta_j = states[:, j]
        # states whose coordinate j is smaller, with the same later coordinates
        rank += B[remaining + j, j] - B[remaining - eta_j + j, j]
        remaining -= eta_j
    return rank


def rank_state(eta, k: int = None) -> int:
    eta = np.asarray(eta, dtype=np.int64)
    if np.any(eta < 0):
        raise ParameterError("Occupancy counts must be nonnegative")
    k = int(eta.sum()) if k is None else k
    if int(eta.sum()) != k:
        raise ParameterError(f"State {eta.tolist()} does not carry {k} particles")
    return int(rank_states(eta[None, :], k)[0])


def unrank_state(rank: int, k: int, l: int) -> np.ndarray:
    """Inverse of rank_state on Omega_{k,l}."""
    size = count_states(k, l)
    if not 0 <= rank < size:
        raise ParameterError(f"Rank {rank} outside 0..{size - 1}")
    B = binomial_table(k + l, l)
    eta = np.zeros(l, dtype=np.int64)
    remaining = k
    for j in range(l - 1, 0, -1):
        # largest value v of coordinate j whose block starts at or before rank
        v = 0
        while v < remaining and B[remaining + j, j] - B[remaining - (v + 1) + j, j] <= rank:
            v += 1
        rank -= B[remaining + j, j] - B[remaining - v + j, j]
        eta[j] = v
        remaining -= v
    eta[0] = remaining
    return eta
