"""Compiled inner loops for path simulation."""

import numba
import numpy as np


@numba.njit(cache=True)
def lazy_walk(neighbors, x0, counts, slots):
    """Positions of a lazy walk after ``counts[k]`` further steps, for each k.

    ``slots`` holds one pre-drawn value in 0..3 per step; a slot beyond the
    vertex degree points back at the vertex itself.
    """
    out = np.empty(counts.shape[0], dtype=np.int64)
    x = x0
    pos = 0
    for k in range(counts.shape[0]):
        for _ in range(counts[k]):
            x = neighbors[x, slots[pos]]
            pos += 1
        out[k] = x
    return out


@numba.njit(cache=True)
def jump_chain(cum, rates, x0, horizon, killed, seed, max_jumps):
    """Continuous-time chain with jump table ``cum`` (row-wise CDF).

    Returns jump times and states up to ``horizon`` or until the first entry
    into a vertex flagged in ``killed``; the last flag tells whether the
    path was killed.
    """
    np.random.seed(seed)
    times = np.empty(max_jumps + 1)
    states = np.empty(max_jumps + 1, dtype=np.int64)
    times[0] = 0.0
    states[0] = x0
    n = 0
    x = x0
    t = 0.0
    if killed[x]:
        return times[:1], states[:1], True
    while n < max_jumps:
        rate = rates[x]
        if rate <= 0.0:
            break
        t += np.random.exponential(1.0 / rate)
        if t > horizon:
            break
        u = np.random.random() * cum[x, -1]
        x = np.searchsorted(cum[x], u, side="right")
        if x >= cum.shape[1]:
            x = cum.shape[1] - 1
        n += 1
        times[n] = t
        states[n] = x
        if killed[x]:
            return times[: n + 1], states[: n + 1], True
    if n >= max_jumps:
        return times[:0], states[:0], False
    return times[: n + 1], states[: n + 1], False
