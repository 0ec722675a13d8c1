"""Compiled batch walker. Mirrors ``confidence.random_walk`` draw for draw."""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def walk_batch(indptr, in_order, lenders, borrowers, amounts, reps, decay_pow,
               root, tx_amount, max_distance, cap, early, indexed,
               seed, start, stop, values, steps):
    m = lenders.shape[0]
    n = reps.shape[0]
    max_in = 0
    for v in range(n):
        d = indptr[v + 1] - indptr[v]
        if d > max_in:
            max_in = d
    depth = min(max_distance, m) + 2
    visited = np.zeros(m, np.bool_)
    touched = np.empty(m, np.int64)
    buf = np.empty(depth * max(max_in, 1), np.int64)
    f_loaned = np.empty(depth, np.int64)
    f_dist = np.empty(depth, np.int64)
    f_amount = np.empty(depth, np.int64)
    f_bstart = np.empty(depth, np.int64)
    f_cursor = np.empty(depth, np.int64)
    f_bend = np.empty(depth, np.int64)
    useed = np.uint64(seed)

    for w in range(start, stop):
        state = _mix64(useed ^ np.uint64(w))
        ntouched = 0
        nsteps = 0
        sp = 0
        btop = 0
        node = root
        loaned = tx_amount
        dist = 0
        calling = True
        result = 0
        while True:
            if calling:
                calling = False
                resolved = True
                val = 0
                if node == root and dist > 0:
                    val = 0
                else:
                    state = state + _GOLDEN
                    u = np.float64(_mix64(state) >> np.uint64(11)) * _INV53
                    if u < reps[node] * decay_pow[dist]:
                        val = loaned
                    else:
                        resolved = False
                        f_loaned[sp] = loaned
                        f_dist[sp] = dist
                        f_amount[sp] = 0
                        f_bstart[sp] = btop
                        if dist < max_distance:
                            if indexed:
                                for k in range(indptr[node], indptr[node + 1]):
                                    e = in_order[k]
                                    if not visited[e]:
                                        buf[btop] = e
                                        btop += 1
                            else:
                                for e in range(m):
                                    if borrowers[e] == node and not visited[e]:
                                        buf[btop] = e
                                        btop += 1
                        f_cursor[sp] = f_bstart[sp]
                        f_bend[sp] = btop
                        sp += 1
                if resolved:
                    if sp == 0:
                        result = val
                        break
                    f_amount[sp - 1] += val
            t = sp - 1
            target = tx_amount
            if cap and f_loaned[t] < target:
                target = f_loaned[t]
            if (f_cursor[t] < f_bend[t] and f_dist[t] < max_distance
                    and not (early and f_amount[t] >= target)):
                e = buf[f_cursor[t]]
                f_cursor[t] += 1
                if not visited[e]:
                    visited[e] = True
                    touched[ntouched] = e
                    ntouched += 1
                pred = lenders[e]
                if pred != root:
                    node = pred
                    loaned = amounts[e]
                    dist = f_dist[t] + 1
                    calling = True
                    nsteps += 1
                    continue
            amt = f_amount[t]
            if cap and amt > f_loaned[t]:
                amt = f_loaned[t]
            btop = f_bstart[t]
            sp -= 1
            if sp == 0:
                result = amt
                break
            f_amount[sp - 1] += amt
        values[w - start] = result
        steps[w - start] = nsteps
        for i in range(ntouched):
            visited[touched[i]] = False
