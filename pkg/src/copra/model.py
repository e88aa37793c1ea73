"""Problem data, cost evaluation, and feasibility checking.

A problem instance describes a single edge cache serving requests for a
catalog of contents over a horizon of discrete time slots.  A cached copy
carries an age (slots since it was last downloaded); serving from a stale
copy is more expensive, and every download consumes backhaul capacity.
Requests for non-cached contents can be deflected to a set of cached,
related contents which the requester accepts with known probabilities;
unaccepted requests fall through to the origin server at the highest cost.

Slots are 0-indexed throughout this package.  A content cached in slot t
can carry an age in ``{0, ..., min(aoi_limit, t)}``: age a > 0 in slot t
requires the content to have been cached with age a - 1 in slot t - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Mapping, Optional, Tuple

import numpy as np

LINEAR = "linear"
RECIPROCAL = "reciprocal"
EXP = "exp"
AOI_COST_FAMILIES = (LINEAR, RECIPROCAL, EXP)


def aoi_cost_value(family: str, alpha: float, age: int) -> float:
    """Evaluate one age-cost curve; all families equal 1 at age 0."""
    if family == LINEAR:
        return 1.0 + alpha * age
    if family == RECIPROCAL:
        return 1.0 / (1.0 - alpha * age)
    if family == EXP:
        return math.exp(alpha * age)
    raise ValueError(f"unknown age-cost family {family!r}")


@dataclass(frozen=True)
class Instance:
    """Immutable problem data.

    relations[i] maps a related content j to the acceptance probabilities
    of j as a substitute for i, indexed by the age of j (length
    ``aoi_limit[j] + 1``).
    """

    num_contents: int
    num_slots: int
    size: np.ndarray              # [I], > 0
    requests: np.ndarray          # [T, I], >= 0
    aoi_limit: np.ndarray         # [I], >= 0
    cost_family: np.ndarray       # [T, I], object/str codes
    cost_alpha: np.ndarray        # [T, I]
    relations: Tuple[Mapping[int, np.ndarray], ...]
    cache_capacity: float
    backhaul_capacity: float
    cost_server: float
    cost_cache: float
    rec_limit: int

    def max_age(self, t: int, i: int) -> int:
        """Largest admissible age of content i in slot t."""
        return min(int(self.aoi_limit[i]), t)

    def ages(self, t: int, i: int) -> range:
        return range(self.max_age(t, i) + 1)

    def aoi_cost(self, t: int, i: int, age: int) -> float:
        return self._cost_table[t, i, age]

    @cached_property
    def _cost_table(self) -> np.ndarray:
        amax = int(self.aoi_limit.max(initial=0))
        table = np.ones((self.num_slots, self.num_contents, amax + 1))
        for t in range(self.num_slots):
            for i in range(self.num_contents):
                fam = str(self.cost_family[t, i])
                alpha = float(self.cost_alpha[t, i])
                for a in range(1, int(self.aoi_limit[i]) + 1):
                    table[t, i, a] = aoi_cost_value(fam, alpha, a)
        return table

    @cached_property
    def reverse_relations(self) -> Tuple[Tuple[int, ...], ...]:
        """reverse_relations[i] lists the contents j with i in relations[j]."""
        rev: List[List[int]] = [[] for _ in range(self.num_contents)]
        for j in range(self.num_contents):
            for i in self.relations[j]:
                rev[i].append(j)
        return tuple(tuple(sorted(js)) for js in rev)


ValidationReport = List[str]


def validate_instance(inst: Instance) -> ValidationReport:
    """Collect violated instance invariants; an empty list means valid."""
    bad: List[str] = []
    if not inst.cost_server > inst.cost_cache > 0:
        bad.append(
            f"cost_server > cost_cache > 0 required, got "
            f"cost_server={inst.cost_server}, cost_cache={inst.cost_cache}"
        )
    if inst.num_contents <= 0 or inst.num_slots <= 0:
        bad.append("num_contents and num_slots must be positive")
    if inst.size.shape != (inst.num_contents,) or np.any(inst.size <= 0):
        bad.append("size must be positive for every content")
    if inst.requests.shape != (inst.num_slots, inst.num_contents) or np.any(
        inst.requests < 0
    ):
        bad.append("requests must be nonnegative with shape [slots, contents]")
    if np.any(inst.aoi_limit < 0):
        bad.append("aoi_limit must be nonnegative")
    if inst.rec_limit < 0:
        bad.append("rec_limit must be nonnegative")
    if inst.cache_capacity < 0 or inst.backhaul_capacity < 0:
        bad.append("capacities must be nonnegative")

    for t in range(inst.num_slots):
        for i in range(inst.num_contents):
            fam = str(inst.cost_family[t, i])
            alpha = float(inst.cost_alpha[t, i])
            if fam not in AOI_COST_FAMILIES:
                bad.append(f"unknown age-cost family {fam!r} at slot {t} content {i}")
                continue
            limit = int(inst.aoi_limit[i])
            if fam == RECIPROCAL and alpha * limit >= 1.0:
                bad.append(
                    f"pole inside AoI range: reciprocal alpha={alpha} at "
                    f"slot {t} content {i} with aoi_limit={limit}"
                )
                continue
            prev = 1.0
            for a in range(limit + 1):
                val = aoi_cost_value(fam, alpha, a)
                if a == 0 and abs(val - 1.0) > 1e-12:
                    bad.append(f"age-0 cost must be 1 at slot {t} content {i}")
                if val < prev - 1e-12:
                    bad.append(
                        f"age cost must be nondecreasing at slot {t} content {i}"
                    )
                    break
                prev = val

    if len(inst.relations) != inst.num_contents:
        bad.append("relations must have one entry per content")
        return bad
    for i, rel in enumerate(inst.relations):
        for j, probs in rel.items():
            if j == i:
                bad.append(f"content {i} cannot be related to itself")
            if not 0 <= j < inst.num_contents:
                bad.append(f"relation {i} -> {j} out of range")
                continue
            probs = np.asarray(probs)
            if probs.shape != (int(inst.aoi_limit[j]) + 1,):
                bad.append(
                    f"relation {i} -> {j} needs one probability per age "
                    f"0..{int(inst.aoi_limit[j])}"
                )
            if np.any(probs <= 0) or np.any(probs >= 1):
                bad.append(f"acceptance probabilities for {i} -> {j} must lie in (0,1)")
    return bad


def miss_probability(probs: Iterable[float]) -> float:
    """Probability that none of the offered substitutes is accepted."""
    out = 1.0
    for p in probs:
        out *= 1.0 - p
    return out


@dataclass(frozen=True)
class RecommendationColumn:
    """One substitution offer for requests of `owner` in slot `slot`.

    items holds (content, age) pairs, at most one age per content and at
    most the instance's rec_limit pairs in total.  The empty offer is
    legal and means every request is served by the origin server.
    """

    owner: int
    slot: int
    items: frozenset  # of (content, age)
    miss_prob: float

    @staticmethod
    def empty(owner: int, slot: int) -> "RecommendationColumn":
        return RecommendationColumn(owner, slot, frozenset(), 1.0)

    @staticmethod
    def build(
        inst: Instance, t: int, i: int, items: Iterable[Tuple[int, int]]
    ) -> "RecommendationColumn":
        items = frozenset(items)
        probs = [inst.relations[i][j][a] for (j, a) in items]
        return RecommendationColumn(i, t, items, miss_probability(probs))

    def expected_cost(self, inst: Instance) -> float:
        """Expected serving cost of all slot-t requests for the owner."""
        s = float(inst.size[self.owner])
        h = float(inst.requests[self.slot, self.owner])
        cb, cs = inst.cost_cache, inst.cost_server
        return (cb * (1.0 - self.miss_prob) + cs * self.miss_prob) * s * h


@dataclass(frozen=True)
class CachePlan:
    """Which contents are cached per slot and at what age.

    aoi[t, i] is -1 when content i is not cached in slot t, otherwise the
    age of the cached copy; age 0 means the copy was downloaded in slot t.
    """

    aoi: np.ndarray  # [T, I] int, -1 = not cached

    @staticmethod
    def empty(inst: Instance) -> "CachePlan":
        return CachePlan(np.full((inst.num_slots, inst.num_contents), -1, dtype=int))

    def cached(self, t: int, i: int) -> bool:
        return self.aoi[t, i] >= 0

    def cached_state(self, t: int) -> dict:
        """Mapping content -> age for everything cached in slot t."""
        row = self.aoi[t]
        return {i: int(row[i]) for i in np.flatnonzero(row >= 0)}


@dataclass(frozen=True)
class Solution:
    """A cache plan plus one recommendation column per non-cached (slot, content)."""

    plan: CachePlan
    recs: Mapping[Tuple[int, int], RecommendationColumn] = field(default_factory=dict)


class InfeasibleSolutionError(ValueError):
    """Raised by cost evaluation when the solution breaks a hard constraint."""


def _check_plan_chain(inst: Instance, plan: CachePlan) -> None:
    aoi = plan.aoi
    for t in range(inst.num_slots):
        for i in range(inst.num_contents):
            a = int(aoi[t, i])
            if a < 0:
                continue
            if a > inst.max_age(t, i):
                raise InfeasibleSolutionError(
                    f"age {a} exceeds limit {inst.max_age(t, i)} at slot {t} content {i}"
                )
            if a > 0 and (t == 0 or int(aoi[t - 1, i]) != a - 1):
                raise InfeasibleSolutionError(
                    f"broken age chain at slot {t} content {i}: age {a} needs "
                    f"age {a - 1} in slot {t - 1}"
                )


def download_cost(inst: Instance, plan: CachePlan) -> float:
    """Downloading cost of a cache plan: cache refills plus cached serving.

    Every age-0 copy costs (cost_server - cost_cache) * size to bring into
    the cache; every cached copy serves its slot's requests at
    cost_cache * size * requests * age_cost(age).
    """
    _check_plan_chain(inst, plan)
    cb, cs = inst.cost_cache, inst.cost_server
    total = 0.0
    for t in range(inst.num_slots):
        for i in range(inst.num_contents):
            a = int(plan.aoi[t, i])
            if a < 0:
                continue
            s = float(inst.size[i])
            if a == 0:
                total += (cs - cb) * s
            total += cb * s * float(inst.requests[t, i]) * inst.aoi_cost(t, i, a)
    return total


def recommendation_cost(inst: Instance, sol: Solution) -> float:
    """Expected serving cost of all requests for non-cached contents."""
    total = 0.0
    for t in range(inst.num_slots):
        for i in range(inst.num_contents):
            if sol.plan.cached(t, i):
                continue
            col = sol.recs.get((t, i))
            if col is None:
                raise InfeasibleSolutionError(
                    f"missing recommendation column at slot {t} content {i}"
                )
            for (j, a) in col.items:
                if int(sol.plan.aoi[t, j]) != a:
                    raise InfeasibleSolutionError(
                        f"column for slot {t} content {i} offers content {j} at "
                        f"age {a}, which is not cached in that state"
                    )
            total += col.expected_cost(inst)
    return total


def total_cost(inst: Instance, sol: Solution) -> float:
    return download_cost(inst, sol.plan) + recommendation_cost(inst, sol)


@dataclass(frozen=True)
class Violation:
    constraint: str
    slot: Optional[int] = None
    content: Optional[int] = None
    detail: str = ""

    def __str__(self) -> str:
        where = []
        if self.slot is not None:
            where.append(f"slot {self.slot}")
        if self.content is not None:
            where.append(f"content {self.content}")
        loc = " @ " + ", ".join(where) if where else ""
        msg = f": {self.detail}" if self.detail else ""
        return f"{self.constraint}{loc}{msg}"


def check_feasibility(inst: Instance, sol: Solution) -> List[Violation]:
    """Check a solution against every scheduling constraint.

    Returns one entry per violated constraint instance; an empty list
    means the solution is feasible.
    """
    out: List[Violation] = []
    aoi = sol.plan.aoi
    T, I = inst.num_slots, inst.num_contents
    if aoi.shape != (T, I):
        return [Violation("shape", detail=f"plan shape {aoi.shape} != {(T, I)}")]

    for t in range(T):
        cache_load = 0.0
        backhaul_load = 0.0
        for i in range(I):
            a = int(aoi[t, i])
            cached = a >= 0
            if cached:
                cache_load += float(inst.size[i])
                if a == 0:
                    backhaul_load += float(inst.size[i])
                if a > inst.max_age(t, i):
                    out.append(
                        Violation(
                            "aoi-range", t, i,
                            f"age {a} exceeds min(aoi_limit, t) = {inst.max_age(t, i)}",
                        )
                    )
                elif a > 0 and int(aoi[t - 1, i]) != a - 1:
                    out.append(
                        Violation(
                            "aoi-chain", t, i,
                            f"age {a} requires age {a - 1} in slot {t - 1}",
                        )
                    )
            col = sol.recs.get((t, i))
            if cached and col is not None:
                out.append(
                    Violation("cache-or-recommend", t, i,
                              "cached content also carries a recommendation column")
                )
            if not cached:
                if col is None:
                    out.append(
                        Violation("cache-or-recommend", t, i,
                                  "non-cached content has no recommendation column")
                    )
                else:
                    out.extend(_check_column(inst, sol, t, i, col))
        if cache_load > inst.cache_capacity + 1e-9:
            out.append(
                Violation("cache-capacity", t, None,
                          f"load {cache_load} > {inst.cache_capacity}")
            )
        if backhaul_load > inst.backhaul_capacity + 1e-9:
            out.append(
                Violation("backhaul-capacity", t, None,
                          f"load {backhaul_load} > {inst.backhaul_capacity}")
            )
    return out


def _check_column(
    inst: Instance, sol: Solution, t: int, i: int, col: RecommendationColumn
) -> List[Violation]:
    out: List[Violation] = []
    if len(col.items) > inst.rec_limit:
        out.append(
            Violation("rec-size", t, i,
                      f"{len(col.items)} items > limit {inst.rec_limit}")
        )
    seen = set()
    for (j, a) in col.items:
        if j in seen:
            out.append(Violation("rec-one-age", t, i, f"content {j} offered twice"))
        seen.add(j)
        if j not in inst.relations[i]:
            out.append(Violation("rec-related", t, i, f"content {j} is not related"))
        if int(sol.plan.aoi[t, j]) != a:
            out.append(
                Violation("rec-cached", t, i,
                          f"offered content {j} at age {a} is not cached that way")
            )
    expected = miss_probability(
        inst.relations[i][j][a] for (j, a) in col.items if j in inst.relations[i]
    )
    if not math.isclose(col.miss_prob, expected, rel_tol=1e-9, abs_tol=1e-12):
        out.append(
            Violation("rec-miss-prob", t, i,
                      f"stored {col.miss_prob} != recomputed {expected}")
        )
    return out


def best_recommendation_column(
    inst: Instance, t: int, i: int, cached_state: Mapping[int, int]
) -> RecommendationColumn:
    """Cheapest recommendation column for a non-cached content.

    The expected cost is strictly increasing in the miss probability, so
    it is minimized by offering the (at most rec_limit) cached related
    contents with the largest acceptance probabilities.  Ties prefer the
    lower content id.
    """
    candidates = []
    for j, probs in inst.relations[i].items():
        a = cached_state.get(j)
        if a is None:
            continue
        candidates.append((-float(probs[a]), j, a))
    candidates.sort()
    chosen = [(j, a) for (_, j, a) in candidates[: inst.rec_limit]]
    return RecommendationColumn.build(inst, t, i, chosen)


def fill_recommendations(inst: Instance, plan: CachePlan) -> Solution:
    """Complete a cache plan into a full solution with optimal columns."""
    recs = {}
    for t in range(inst.num_slots):
        state = plan.cached_state(t)
        for i in range(inst.num_contents):
            if not plan.cached(t, i):
                recs[(t, i)] = best_recommendation_column(inst, t, i, state)
    return Solution(plan, recs)


def server_only_solution(inst: Instance) -> Solution:
    """The trivial feasible solution: cache nothing, recommend nothing."""
    plan = CachePlan.empty(inst)
    recs = {
        (t, i): RecommendationColumn.empty(i, t)
        for t in range(inst.num_slots)
        for i in range(inst.num_contents)
    }
    return Solution(plan, recs)
