"""Exact reference solvers for verification.

``solve_exact`` finds the global optimum of small instances by depth-first
enumeration over per-slot cache states (which contents are cached and at
what age), memoizing the best completion of every (slot, state) pair.
``solve_copra_cat`` handles the polynomial special case of a single slot
with unit-size contents partitioned into categories of uniform
within-category acceptance probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model
from .model import CachePlan, Instance, Solution

State = Tuple[int, ...]  # per content: -1 = not cached, else age


class SearchSpaceTooLarge(Exception):
    """The instance exceeds the configured exact-search budget."""


@dataclass(frozen=True)
class OracleLimits:
    max_states: float = 1e7  # bound on the product of per-slot state counts


@dataclass(frozen=True)
class ExactResult:
    solution: Solution
    cost: float


def _slot_states(inst: Instance, t: int) -> List[State]:
    """All capacity-feasible cache states for slot t, in deterministic order.

    Contents are considered in id order and ages ascending, with "not
    cached" first, so the enumeration (and hence the oracle) is stable.
    """
    out: List[State] = []
    state = [-1] * inst.num_contents

    def rec(i: int, cache_left: float, backhaul_left: float) -> None:
        if i == inst.num_contents:
            out.append(tuple(state))
            return
        rec(i + 1, cache_left, backhaul_left)
        s = float(inst.size[i])
        if s <= cache_left + 1e-9:
            for a in inst.ages(t, i):
                if a == 0 and s > backhaul_left + 1e-9:
                    continue
                state[i] = a
                rec(i + 1, cache_left - s, backhaul_left - (s if a == 0 else 0.0))
                state[i] = -1

    rec(0, inst.cache_capacity, inst.backhaul_capacity)
    return out


def _state_cost(inst: Instance, t: int, state: State) -> float:
    """Exact cost of one slot given its cache state, with optimal columns."""
    cb, cs = inst.cost_cache, inst.cost_server
    cached = {i: a for i, a in enumerate(state) if a >= 0}
    cost = 0.0
    for i in range(inst.num_contents):
        s = float(inst.size[i])
        h = float(inst.requests[t, i])
        a = state[i]
        if a >= 0:
            if a == 0:
                cost += (cs - cb) * s
            cost += cb * s * h * inst.aoi_cost(t, i, a)
        else:
            col = model.best_recommendation_column(inst, t, i, cached)
            cost += col.expected_cost(inst)
    return cost


def _transition_ok(inst: Instance, prev: State, nxt: State) -> bool:
    for i, a in enumerate(nxt):
        if a > 0 and prev[i] != a - 1:
            return False
    return True


def _successors(inst: Instance, t: int, state: State) -> List[State]:
    """Chain-feasible successor states for slot t + 1, capacity-pruned.

    Per content the options are: evict, download fresh, or (if currently
    cached and within the age limit) keep one slot older.
    """
    out: List[State] = []
    nxt = [-1] * inst.num_contents

    def rec(i: int, cache_left: float, backhaul_left: float) -> None:
        if i == inst.num_contents:
            out.append(tuple(nxt))
            return
        rec(i + 1, cache_left, backhaul_left)  # evict / stay absent
        s = float(inst.size[i])
        if s <= cache_left + 1e-9:
            if s <= backhaul_left + 1e-9:
                nxt[i] = 0
                rec(i + 1, cache_left - s, backhaul_left - s)
                nxt[i] = -1
            a = state[i]
            if a >= 0 and a + 1 <= inst.max_age(t + 1, i):
                nxt[i] = a + 1
                rec(i + 1, cache_left - s, backhaul_left)
                nxt[i] = -1

    rec(0, inst.cache_capacity, inst.backhaul_capacity)
    return out


def solve_exact(inst: Instance, limits: OracleLimits = OracleLimits()) -> ExactResult:
    """Provably optimal solution by exhaustive search over cache states.

    Refuses with :class:`SearchSpaceTooLarge` when the product of per-slot
    state counts exceeds the configured budget.  Within budget, a
    depth-first pass over slot states with memoized completions visits
    every reachable (slot, state) pair exactly once.
    """
    layers = [_slot_states(inst, t) for t in range(inst.num_slots)]
    space = 1.0
    for layer in layers:
        space *= max(1, len(layer))
        if space > limits.max_states:
            raise SearchSpaceTooLarge(
                f"about {space:.3g} state sequences exceed budget {limits.max_states:.3g}"
            )

    T = inst.num_slots
    cost_cache: List[Dict[State, float]] = [dict() for _ in range(T)]
    memo: List[Dict[State, Tuple[float, Optional[State]]]] = [dict() for _ in range(T)]

    def slot_cost(t: int, state: State) -> float:
        c = cost_cache[t].get(state)
        if c is None:
            c = _state_cost(inst, t, state)
            cost_cache[t][state] = c
        return c

    def best_from(t: int, state: State) -> Tuple[float, Optional[State]]:
        hit = memo[t].get(state)
        if hit is not None:
            return hit
        here = slot_cost(t, state)
        if t == T - 1:
            memo[t][state] = (here, None)
            return here, None
        best = (float("inf"), None)
        for nxt in _successors(inst, t, state):
            tail, _ = best_from(t + 1, nxt)
            if here + tail < best[0]:
                best = (here + tail, nxt)
        memo[t][state] = best
        return best

    best_cost, best_start = float("inf"), None
    for s in layers[0]:
        c, _ = best_from(0, s)
        if c < best_cost:
            best_cost, best_start = c, s

    aoi = np.full((T, inst.num_contents), -1, dtype=int)
    state = best_start
    for t in range(T):
        aoi[t] = state
        _, state = memo[t][state]
    plan = CachePlan(aoi)
    sol = model.fill_recommendations(inst, plan)
    return ExactResult(solution=sol, cost=float(best_cost))


def maximize_weighted_plan(
    inst: Instance, weights: np.ndarray, limits: OracleLimits = OracleLimits()
) -> CachePlan:
    """Chain-feasible cache plan maximizing the summed per-cell weights.

    Same state enumeration as :func:`solve_exact`, but the per-slot value
    of a state is simply the total weight of its cached contents; ages
    matter only through chain feasibility.
    """
    layers = [_slot_states(inst, t) for t in range(inst.num_slots)]
    space = 1.0
    for layer in layers:
        space *= max(1, len(layer))
        if space > limits.max_states:
            raise SearchSpaceTooLarge(
                f"about {space:.3g} state sequences exceed budget {limits.max_states:.3g}"
            )

    T = inst.num_slots
    memo: List[Dict[State, Tuple[float, Optional[State]]]] = [dict() for _ in range(T)]

    def gain(t: int, state: State) -> float:
        return float(sum(weights[t, i] for i, a in enumerate(state) if a >= 0))

    def best_from(t: int, state: State) -> Tuple[float, Optional[State]]:
        hit = memo[t].get(state)
        if hit is not None:
            return hit
        here = gain(t, state)
        if t == T - 1:
            memo[t][state] = (here, None)
            return here, None
        best = (-float("inf"), None)
        for nxt in _successors(inst, t, state):
            tail, _ = best_from(t + 1, nxt)
            if here + tail > best[0]:
                best = (here + tail, nxt)
        memo[t][state] = best
        return best

    best_gain, best_start = -float("inf"), None
    for s in layers[0]:
        g, _ = best_from(0, s)
        if g > best_gain:
            best_gain, best_start = g, s

    aoi = np.full((T, inst.num_contents), -1, dtype=int)
    state = best_start
    for t in range(T):
        aoi[t] = state
        _, state = memo[t][state]
    return CachePlan(aoi)


# --------------------------------------------------------------------------
# Categorized single-slot special case
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CatInstance:
    """Single slot, unit sizes, categorized contents.

    requests[k] holds the per-content request counts of category k.  The
    acceptance probability between two contents depends only on their
    categories (accept_prob[k, l], with the diagonal driving the
    recursion; off-diagonal entries are carried but the polynomial
    recursion is exact only when they are zero).
    """

    requests: Sequence[np.ndarray]
    accept_prob: np.ndarray  # [K, K]
    cache_size: int
    cost_server: float = 2.0
    cost_cache: float = 1.0
    rec_limit: int = 2

    @property
    def num_categories(self) -> int:
        return len(self.requests)


@dataclass(frozen=True)
class CatResult:
    cost: float
    allocation: Tuple[int, ...]  # cached contents per category
    table_fills: int             # min-candidate evaluations in the recursion


def category_cost(cat: CatInstance, k: int, cached_count: int) -> float:
    """Cost of category k when its `cached_count` most-requested contents
    are cached (ties broken toward the lower content id)."""
    h = np.asarray(cat.requests[k], dtype=float)
    order = np.lexsort((np.arange(len(h)), -h))
    cb, cs = cat.cost_cache, cat.cost_server
    p = float(cat.accept_prob[k, k])
    cost = 0.0
    offered = min(cat.rec_limit, cached_count)
    miss = (1.0 - p) ** offered if cached_count > 0 else 1.0
    for rank, idx in enumerate(order):
        if rank < cached_count:
            cost += (cs - cb) + cb * h[idx]
        else:
            cost += (cb * (1.0 - miss) + cs * miss) * h[idx]
    return cost


def solve_copra_cat(cat: CatInstance) -> CatResult:
    """Optimal cache split across categories by the capacity recursion.

    w(k, s') is the optimal cost of the first k categories with budget s';
    it extends w(k - 1, .) by trying every within-category cache count r.
    """
    K, S = cat.num_categories, int(cat.cache_size)
    g = [
        [category_cost(cat, k, r) for r in range(len(cat.requests[k]) + 1)]
        for k in range(K)
    ]
    INF = float("inf")
    w = np.zeros((K + 1, S + 1))
    choice = np.zeros((K + 1, S + 1), dtype=int)
    fills = 0
    for k in range(1, K + 1):
        sizes_k = len(cat.requests[k - 1])
        for s in range(S + 1):
            best, best_r = INF, 0
            for r in range(min(s, sizes_k) + 1):
                fills += 1
                val = g[k - 1][r] + w[k - 1][s - r]
                if val < best - 1e-12:
                    best, best_r = val, r
            w[k][s] = best
            choice[k][s] = best_r
    alloc = []
    s = S
    for k in range(K, 0, -1):
        r = int(choice[k][s])
        alloc.append(r)
        s -= r
    alloc.reverse()
    return CatResult(cost=float(w[K][S]), allocation=tuple(alloc), table_fills=fills)


def cat_to_instance(cat: CatInstance) -> Instance:
    """Embed a categorized instance as a general single-slot instance.

    Only within-category relations are materialized when the off-diagonal
    probabilities are zero; nonzero cross-category probabilities become
    ordinary relation edges.
    """
    counts = [len(h) for h in cat.requests]
    I = sum(counts)
    category_of = np.concatenate(
        [np.full(c, k, dtype=int) for k, c in enumerate(counts)]
    )
    requests = np.concatenate([np.asarray(h, dtype=float) for h in cat.requests])
    relations: List[Dict[int, np.ndarray]] = [dict() for _ in range(I)]
    for i in range(I):
        for j in range(I):
            if i == j:
                continue
            p = float(cat.accept_prob[category_of[i], category_of[j]])
            if 0.0 < p < 1.0:
                relations[i][j] = np.array([p])
    return Instance(
        num_contents=I,
        num_slots=1,
        size=np.ones(I),
        requests=requests.reshape(1, I),
        aoi_limit=np.zeros(I, dtype=int),
        cost_family=np.full((1, I), model.LINEAR, dtype=object),
        cost_alpha=np.zeros((1, I)),
        relations=tuple(relations),
        cache_capacity=float(cat.cache_size),
        backhaul_capacity=float(cat.cache_size),
        cost_server=cat.cost_server,
        cost_cache=cat.cost_cache,
        rec_limit=cat.rec_limit,
    )
