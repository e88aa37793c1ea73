"""Per-content age-trajectory subproblem under Lagrangian prices.

For one content, choose per slot whether it sits in the cache and at what
age, respecting the age chain (age a in slot t requires age a - 1 in slot
t - 1, and a refresh resets the age to zero).  The objective charges the
real download/serving cost of the trajectory plus a price lambda[t, i, a]
on every occupied (slot, age) cell; prices may be negative.

The feasible trajectories form a small layered DAG (one "not cached" node
and one node per admissible age, per slot), so a single forward pass in
slot order finds the minimum-cost trajectory.  The graph is never
materialized; the pass streams over slots with one value per age state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .model import Instance

#: state index 0 = not cached, state a + 1 = cached at age a
NOT_CACHED = -1


def arc_weight(inst: Instance, lam: np.ndarray, t: int, i: int, a: int) -> float:
    """Cost of occupying (slot t, age a) for content i.

    Entering age 0 pays the cache refill (cost_server - cost_cache) * size
    on top of serving the slot's requests; higher ages only serve, at the
    age-inflated rate.  The price lambda[t, i, a] is added verbatim and
    may make the weight negative.
    """
    s = float(inst.size[i])
    h = float(inst.requests[t, i])
    w = inst.cost_cache * s * h * inst.aoi_cost(t, i, a) + float(lam[t, i, a])
    if a == 0:
        w += (inst.cost_server - inst.cost_cache) * s
    return w


@dataclass(frozen=True)
class Sp1Result:
    aoi: np.ndarray      # [T] int, -1 = not cached in that slot
    value: float

    def occupied(self) -> List[Tuple[int, int]]:
        return [(t, int(a)) for t, a in enumerate(self.aoi) if a >= 0]


def solve_sp1_item(inst: Instance, lam: np.ndarray, i: int) -> Sp1Result:
    """Minimum-priced age trajectory for one content.

    Ties between equal-cost trajectories are broken toward "not cached",
    then toward the lower age, which keeps results deterministic and
    steers ambiguity away from capacity use.
    """
    T = inst.num_slots
    INF = float("inf")
    # dist[0] = not cached, dist[a + 1] = cached at age a.
    amax_total = inst.max_age(T - 1, i)
    dist = np.full(amax_total + 2, INF)
    dist[0] = 0.0
    dist[1] = arc_weight(inst, lam, 0, i, 0)
    parents: List[np.ndarray] = [np.full(amax_total + 2, NOT_CACHED, dtype=int)]

    for t in range(1, T):
        nxt = np.full(amax_total + 2, INF)
        par = np.full(amax_total + 2, NOT_CACHED, dtype=int)
        # Cheapest predecessor for "leave / re-enter at age 0"; preference
        # order: not cached first, then ascending age.
        best_state, best_val = 0, dist[0]
        for st in range(1, inst.max_age(t - 1, i) + 2):
            if dist[st] < best_val:
                best_val, best_state = dist[st], st
        nxt[0] = best_val
        par[0] = best_state
        nxt[1] = best_val + arc_weight(inst, lam, t, i, 0)
        par[1] = best_state
        for a in range(1, inst.max_age(t, i) + 1):
            prev = dist[a]  # cached at age a - 1 in slot t - 1
            if prev < INF:
                nxt[a + 1] = prev + arc_weight(inst, lam, t, i, a)
                par[a + 1] = a
        dist = nxt
        parents.append(par)

    end_state, end_val = 0, dist[0]
    for st in range(1, amax_total + 2):
        if dist[st] < end_val:
            end_val, end_state = dist[st], st

    aoi = np.full(T, NOT_CACHED, dtype=int)
    st = end_state
    for t in range(T - 1, -1, -1):
        aoi[t] = st - 1 if st > 0 else NOT_CACHED
        if t > 0:
            st = parents[t][st]
    return Sp1Result(aoi=aoi, value=float(end_val))


def solve_sp1_all(inst: Instance, lam: np.ndarray) -> Tuple[np.ndarray, float]:
    """Solve every content's trajectory; contents are independent.

    Returns the occupied-cell indicator x[t, i, a] and the summed value.
    """
    x = np.zeros(lam.shape)
    total = 0.0
    for i in range(inst.num_contents):
        res = solve_sp1_item(inst, lam, i)
        for t, a in res.occupied():
            x[t, i, a] = 1.0
        total += res.value
    return x, total


def trajectory_value(inst: Instance, lam: np.ndarray, i: int, aoi: np.ndarray) -> float:
    """Objective of an explicit trajectory; used to audit solver output."""
    return sum(
        arc_weight(inst, lam, t, i, int(a)) for t, a in enumerate(aoi) if a >= 0
    )
