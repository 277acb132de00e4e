import numpy as np
from numba import njit


@njit(cache=True)
def set_insert(occ, pos, counters, x):
    k = counters[0]
    occ[k] = x
    pos[x] = k
    counters[0] = k + 1


@njit(cache=True)
def set_remove(occ, pos, counters, x):
    # swap with last
    i = pos[x]
    k = counters[0] - 1
    last = occ[k]
    occ[i] = last
    pos[last] = i
    pos[x] = -1
    counters[0] = k


class IndexedSiteSet:
    """
    Fixed-capacity set of sites 1..L with O(1) insert, delete and uniform choice:
    a dense array of members plus a position map (-1 for absent sites).
    The arrays are shared with the jitted event loop, which edits them in place.
    """

    def __init__(self, L: int):
        self.occ = np.zeros(max(L, 1), dtype=np.int64)
        self.pos = np.full(L + 2, -1, dtype=np.int64)
        self.counters = np.zeros(3, dtype=np.int64)

    @classmethod
    def from_occupancy(cls, eta: np.ndarray) -> "IndexedSiteSet":
        """:param eta: counts for sites 1..L"""
        s = cls(len(eta))
        for x in np.flatnonzero(eta > 0) + 1:
            s.add(int(x))
        return s

    def __len__(self):
        return int(self.counters[0])

    def __contains__(self, x: int) -> bool:
        return 0 <= x < len(self.pos) and self.pos[x] >= 0

    def __iter__(self):
        return iter(self.occ[: len(self)].tolist())

    def add(self, x: int):
        if x not in self:
            set_insert(self.occ, self.pos, self.counters, x)

    def discard(self, x: int):
        if x in self:
            set_remove(self.occ, self.pos, self.counters, x)

    def choice(self, rng: np.random.Generator) -> int:
        if not len(self):
            raise IndexError("choice from an empty site set")
        return int(self.occ[rng.integers(len(self))])

    def consistent_with(self, eta: np.ndarray) -> bool:
        """True iff the members are exactly the occupied sites of eta (sites 1..L)."""
        members = np.sort(self.occ[: len(self)])
        return bool(np.array_equal(members, np.flatnonzero(eta > 0) + 1))
