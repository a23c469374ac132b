"""Hot numeric kernels with JIT and pure-numpy twins.

The matching step solves one budgeted selection DP per group per iteration,
and every particle evaluation rebuilds chunk-overflow estimates per BS; both
sit on the innermost path of the swarm optimizer. Each kernel exists twice:
a loop version compiled with numba ``@njit`` and a vectorized numpy version.
Setting the environment variable ``TIERPLAN_NO_JIT=1`` (or running without
numba installed) selects the numpy path. Both paths produce bit-identical
results; ``benchmarks/bench_kernels.py`` compares their speed.
"""

from __future__ import annotations

import os

import numpy as np

NO_JIT = os.environ.get("TIERPLAN_NO_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    if NO_JIT:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


# ---------------------------------------------------------------------------
# Greedy absorption overflow: loads are served in the given rank order until
# the capacity runs out; entry j of the result is the unserved part of load j.
# ---------------------------------------------------------------------------


def absorb_overflow_numpy(loads: np.ndarray, cap: float) -> np.ndarray:
    cum = np.cumsum(loads.astype(np.float64))
    return np.minimum(loads, np.maximum(cum - cap, 0.0))


def _absorb_overflow_loops(loads, cap):
    out = np.empty(loads.shape[0], dtype=np.float64)
    cum = 0.0
    for j in range(loads.shape[0]):
        cum += loads[j]
        over = cum - cap
        if over < 0.0:
            over = 0.0
        out[j] = loads[j] if loads[j] < over else over
    return out


absorb_overflow_jit = njit(cache=True)(_absorb_overflow_loops)


# ---------------------------------------------------------------------------
# Budgeted multiple-choice selection. Item j owns options
# [item_start[j], item_start[j+1]); exactly one option per item is chosen to
# minimize the cost sum subject to sum(steps) <= cap. Returns the chosen flat
# option index per item. Every item must offer at least one option with
# steps <= cap (callers guarantee a zero-step option), so the DP is feasible.
# Ties resolve to the lowest option index and the smallest budget use.
# ---------------------------------------------------------------------------


def budget_dp_numpy(costs: np.ndarray, steps: np.ndarray, item_start: np.ndarray, cap: int) -> np.ndarray:
    n_items = item_start.shape[0] - 1
    width = cap + 1
    dp = np.zeros(width)
    choice = np.zeros((n_items, width), dtype=np.int16)
    for j in range(n_items):
        lo, hi = item_start[j], item_start[j + 1]
        cand = np.full((hi - lo, width), np.inf)
        for k in range(lo, hi):
            s = steps[k]
            if s <= cap:
                cand[k - lo, s:] = dp[: width - s] + costs[k]
        local = np.argmin(cand, axis=0).astype(np.int16)
        dp = cand[local, np.arange(width)]
        choice[j] = local
    w = int(np.argmin(dp))
    chosen = np.zeros(n_items, dtype=np.int64)
    for j in range(n_items - 1, -1, -1):
        k = item_start[j] + int(choice[j, w])
        chosen[j] = k
        w -= int(steps[k])
    return chosen


def _budget_dp_loops(costs, steps, item_start, cap):
    n_items = item_start.shape[0] - 1
    width = cap + 1
    dp = np.zeros(width)
    nxt = np.empty(width)
    choice = np.zeros((n_items, width), dtype=np.int16)
    for j in range(n_items):
        lo, hi = item_start[j], item_start[j + 1]
        for w in range(width):
            best = np.inf
            pick = np.int16(0)
            for k in range(lo, hi):
                s = steps[k]
                if s <= w:
                    c = dp[w - s] + costs[k]
                    if c < best:
                        best = c
                        pick = np.int16(k - lo)
            nxt[w] = best
            choice[j, w] = pick
        dp, nxt = nxt, dp
    w = 0
    best = dp[0]
    for v in range(width):
        if dp[v] < best:
            best = dp[v]
            w = v
    chosen = np.zeros(n_items, dtype=np.int64)
    for j in range(n_items - 1, -1, -1):
        k = item_start[j] + choice[j, w]
        chosen[j] = k
        w -= steps[k]
    return chosen


budget_dp_jit = njit(cache=True)(_budget_dp_loops)


if HAVE_NUMBA:
    absorb_overflow = absorb_overflow_jit
    budget_dp = budget_dp_jit
else:
    absorb_overflow = absorb_overflow_numpy
    budget_dp = budget_dp_numpy
