"""Jitted event loop of the zero-range process with a source and a mirror reservoir.

All arrays are indexed by site: eta[0] and eta[L + 1] are unused placeholders for
the source and the right reservoir. Time is microscopic. Every occupied site carries
a rate-2 clock, the jump offset is drawn from the kernel; the source and the reservoir
are two extra slots with fixed total rates.
"""

import numpy as np
from numba import njit

from .indexed_set import set_insert, set_remove

JUMP = 0
SOURCE = 1
RESERVOIR = 2

DONE = 0
BUDGET = 1
LOG_FULL = 2


@njit(cache=True)
def _touch(x, now, eta, g_time, eta_time, last):
    dt = now - last[x]
    if eta[x] > 0:
        g_time[x] += dt
        eta_time[x] += dt * eta[x]
    last[x] = now


@njit(cache=True)
def _pick(values, cum, v):
    j = 0
    while j < values.shape[0] - 1 and v > cum[j]:
        j += 1
    return values[j]


@njit(cache=True)
def advance(
    eta,
    J,
    occ,
    pos,
    counters,
    clock,
    g_time,
    eta_time,
    last,
    mag_val,
    mag_cum,
    src_site,
    src_cum,
    src_rate,
    res_rate,
    L,
    rng,
    t_stop,
    max_events,
    log_kind,
    log_site,
    log_target,
    log_time,
    log_on,
):
    """
    Run events until the microscopic clock would pass t_stop, max_events have been
    executed with a further event still due before t_stop, or the event log is full.
    Returns DONE, BUDGET or LOG_FULL.

    A waiting time that overshoots t_stop is discarded and the clock is set to t_stop;
    by memorylessness the next call draws a fresh one.
    """
    events = 0
    while True:
        if events >= max_events and t_stop == np.inf:
            return BUDGET
        k = counters[0]
        total = 2.0 * k + src_rate + res_rate
        now = clock[0]
        if total <= 0.0:
            clock[0] = t_stop
            clock[1] = 0.0
            return DONE
        if log_on and counters[2] >= log_kind.shape[0]:
            return LOG_FULL

        tau = -np.log(1.0 - rng.random()) / total
        if now + tau > t_stop:
            clock[0] = t_stop
            clock[1] = 0.0
            return DONE
        if events >= max_events:
            # spent budget only binds if another event falls before t_stop
            return BUDGET
        # compensated summation of the clock
        y = tau - clock[1]
        t = now + y
        clock[1] = (t - now) - y
        clock[0] = t
        now = t

        u = rng.random() * total
        if u < 2.0 * k:
            idx = int(u * 0.5)
            if idx >= k:
                idx = k - 1
            origin = occ[idx]
            sign = 1 if u - 2.0 * idx >= 1.0 else -1
            mag = mag_val[0]
            if mag_val.shape[0] > 1:
                mag = _pick(mag_val, mag_cum, rng.random())
            target = origin + sign * mag
            kind = JUMP
        elif u < 2.0 * k + src_rate:
            origin = 0
            target = src_site[0]
            if src_site.shape[0] > 1:
                target = _pick(src_site, src_cum, rng.random())
            kind = SOURCE
        else:
            origin = L + 1
            depth = src_site[0]
            if src_site.shape[0] > 1:
                depth = _pick(src_site, src_cum, rng.random())
            target = L + 1 - depth
            kind = RESERVOIR
        if target < 0:
            target = 0
        if target > L + 1:
            target = L + 1

        if 1 <= origin <= L:
            _touch(origin, now, eta, g_time, eta_time, last)
            eta[origin] -= 1
            if eta[origin] == 0:
                set_remove(occ, pos, counters, origin)
        if 1 <= target <= L:
            _touch(target, now, eta, g_time, eta_time, last)
            if eta[target] == 0:
                set_insert(occ, pos, counters, target)
            eta[target] += 1

        if target > origin:
            for c in range(origin, target):
                J[c] += 1
        else:
            for c in range(target, origin):
                J[c] -= 1

        if log_on:
            i = counters[2]
            log_kind[i] = kind
            log_site[i] = origin
            log_target[i] = target
            log_time[i] = now
            counters[2] = i + 1

        events += 1
        counters[1] += 1
