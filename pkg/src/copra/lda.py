"""Lagrangian decomposition driver.

The age-trajectory copy of the occupation variables is priced per content
(shortest path), the per-slot caching/recommendation LP is priced per slot
(column generation), and the two copies are pulled together by a
subgradient ascent on the multipliers.  Every iteration yields a valid
lower bound; periodically the fractional per-slot solutions are rounded,
repaired into a chain-feasible cache plan, and completed into a feasible
incumbent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import colgen, greedy, model, oracle, sp1
from .colgen import SlotPools, Sp2Result
from .model import CachePlan, Instance, Solution


@dataclass
class LdaParams:
    max_iters: int = 200          # iteration cap K
    eta: float = 1.0              # subgradient step scale
    eps_subgradient: float = 1e-4   # stop when ||d|| drops below
    eps_multiplier: float = 1e-4    # stop when the multiplier step drops below
    repair_every: int = 5
    eta_halve_after: int = 10     # halve eta after this many stale iterations
    quantization_m: int = 10_000
    exact_repair: bool = False    # solve the repair problem exactly when small
    repair_epsilon: Optional[float] = None  # default derived from the instance
    oracle_limits: oracle.OracleLimits = field(default_factory=oracle.OracleLimits)


@dataclass
class TraceRow:
    k: int
    lag_value: float
    lbd: float
    upper_bound: float
    step: float
    d_norm: float


@dataclass
class LdaState:
    lam: np.ndarray
    k: int = 1
    lbd: float = 0.0
    upper_bound: float = math.inf     # cost of the best known feasible solution
    incumbent: Optional[Solution] = None
    lag_value: float = -math.inf      # most recent L(lambda)
    eta: float = 1.0
    stale_iters: int = 0
    trace: List[TraceRow] = field(default_factory=list)


@dataclass
class LdaResult:
    incumbent: Optional[Solution]
    incumbent_cost: float
    lbd: float
    trace: List[TraceRow]
    iterations: int
    gap_closed: bool = False

    @property
    def gap(self) -> float:
        if self.lbd <= 0:
            return math.inf
        return (self.incumbent_cost - self.lbd) / self.lbd


def lagrangian_value(
    inst: Instance,
    lam: np.ndarray,
    sp1_values: Sequence[float],
    sp2_values: Sequence[float],
) -> float:
    """Dual function value: the two relaxed subproblem families add up.

    Any multiplier vector yields a lower bound on the integer optimum as
    long as each summand is a true (or under-) estimate of its
    subproblem's minimum; solving the per-slot part as an LP relaxation
    keeps the bound valid.
    """
    return float(sum(sp1_values) + sum(sp2_values))


def subgradient_step(
    state: LdaState, x: np.ndarray, x_prime: np.ndarray
) -> Tuple[np.ndarray, float, float]:
    """One multiplier update toward reconciling the two variable copies.

    d = x - x_prime drives lambda with step eta * (ub - L) / ||d||^2;
    a zero subgradient leaves the multipliers unchanged (the duality gap
    at this multiplier is closed).  Returns (new lambda, step, ||d||).
    """
    d = x - x_prime
    sq = float((d * d).sum())
    if sq == 0.0 or state.eta == 0.0:
        return state.lam, 0.0, 0.0
    step = state.eta * (state.upper_bound - state.lag_value) / sq
    return state.lam + step * d, step, math.sqrt(sq)


def round_sp2(
    inst: Instance,
    lam: np.ndarray,
    t: int,
    pools: SlotPools,
    m_quant: int = 10_000,
) -> np.ndarray:
    """Iteratively round one slot's fractional caching indicators.

    Value-one indicators are fixed, then the largest fractional one is
    fixed to one if the slot's governing capacity still allows it (the
    backhaul in the first slot, where every cached copy is a download,
    the cache afterwards), otherwise to zero; the slot LP is re-solved
    until integral.  At most one content is newly decided per re-solve.
    """
    tol = 1e-6
    fixed: Dict[int, int] = {}
    for _ in range(inst.num_contents + 1):
        res = colgen.solve_sp2_slot(
            inst, lam, t, pools, fixed=fixed or None, m_quant=m_quant
        )
        y = res.y
        frac = [
            i for i in range(inst.num_contents)
            if tol < y[i] < 1.0 - tol and i not in fixed
        ]
        for i in range(inst.num_contents):
            if y[i] >= 1.0 - tol and i not in fixed:
                fixed[i] = 1
        if not frac:
            return np.array([
                1 if (fixed.get(i) == 1 or y[i] >= 1.0 - tol) else 0
                for i in range(inst.num_contents)
            ])
        j = max(frac, key=lambda i: (y[i], -i))
        committed = sum(
            float(inst.size[i]) for i, val in fixed.items() if val == 1
        )
        phi = inst.backhaul_capacity if t == 0 else inst.cache_capacity
        if t == 0:
            phi = min(phi, inst.cache_capacity)  # slot-0 copies hit both limits
        if committed + float(inst.size[j]) <= phi + 1e-9:
            fixed[j] = 1
        else:
            fixed[j] = 0
    raise colgen.Sp2Error(f"slot {t}: rounding failed to reach an integral y")


def default_repair_epsilon(inst: Instance) -> float:
    pos = inst.requests[inst.requests > 0]
    h_min = float(pos.min()) if pos.size else 1.0
    return 1e-3 * float(inst.size.min()) * h_min


def solve_repair(
    inst: Instance,
    y_hat: np.ndarray,
    eps: float,
    exact: bool = False,
    limits: Optional[oracle.OracleLimits] = None,
) -> CachePlan:
    """Chain-feasible cache plan tracking the rounded targets.

    Maximizes sum over (t, i) of (eps + requests * size * y_hat) * y
    subject to the age chain and both capacities.  The default greedy
    pass ranks contents by weight per slot, admits age-chain keeps first
    (they cost no backhaul), then downloads; with ``exact`` the plan is
    found by exhaustive search when the instance fits the search budget.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    T, I = inst.num_slots, inst.num_contents
    weights = eps + inst.requests * inst.size[None, :] * y_hat
    if exact:
        try:
            return oracle.maximize_weighted_plan(
                inst, weights, limits or oracle.OracleLimits()
            )
        except oracle.SearchSpaceTooLarge:
            pass
    aoi = np.full((T, I), -1, dtype=int)
    for t in range(T):
        order = sorted(range(I), key=lambda i: (-weights[t, i], i))
        cache_left = inst.cache_capacity
        backhaul_left = inst.backhaul_capacity
        if t > 0:
            for i in order:
                prev = int(aoi[t - 1, i])
                if prev < 0 or prev + 1 > int(inst.aoi_limit[i]):
                    continue
                if float(inst.size[i]) <= cache_left + 1e-9:
                    aoi[t, i] = prev + 1
                    cache_left -= float(inst.size[i])
        for i in order:
            if aoi[t, i] >= 0:
                continue
            s = float(inst.size[i])
            if s <= cache_left + 1e-9 and s <= backhaul_left + 1e-9:
                aoi[t, i] = 0
                cache_left -= s
                backhaul_left -= s
    return CachePlan(aoi)


def repair_objective(inst: Instance, y_hat: np.ndarray, eps: float,
                     plan: CachePlan) -> float:
    weights = eps + inst.requests * inst.size[None, :] * y_hat
    return float(weights[plan.aoi >= 0].sum())


def run_lda(inst: Instance, params: LdaParams = LdaParams()) -> LdaResult:
    """Full driver loop: subproblems, bound, repair, subgradient update.

    The upper bound is seeded with the better of the greedy schedule and
    the trivial serve-everything-remotely solution, so the step size is
    defined from the first iteration and the incumbent is never worse
    than either seed.
    """
    amax = int(inst.aoi_limit.max(initial=0))
    lam = np.zeros((inst.num_slots, inst.num_contents, amax + 1))
    state = LdaState(lam=lam, eta=params.eta)
    eps = params.repair_epsilon or default_repair_epsilon(inst)

    for seed_sol in (greedy.greedy_schedule(inst), model.server_only_solution(inst)):
        cost = model.total_cost(inst, seed_sol)
        if cost < state.upper_bound:
            state.upper_bound = cost
            state.incumbent = seed_sol

    pools = [colgen.new_pools(inst, t) for t in range(inst.num_slots)]
    gap_closed = False

    while True:
        x_traj = np.zeros_like(state.lam)
        sp1_values = []
        for i in range(inst.num_contents):
            res1 = sp1.solve_sp1_item(inst, state.lam, i)
            sp1_values.append(res1.value)
            for t, a in res1.occupied():
                x_traj[t, i, a] = 1.0

        x_slot = np.zeros_like(state.lam)
        sp2_bounds = []
        slot_results: List[Sp2Result] = []
        for t in range(inst.num_slots):
            res2 = colgen.solve_sp2_slot(
                inst, state.lam, t, pools[t], m_quant=params.quantization_m
            )
            slot_results.append(res2)
            sp2_bounds.append(res2.lower_bound)
            x_slot[t, :, : res2.x.shape[1]] += res2.x

        state.lag_value = lagrangian_value(inst, state.lam, sp1_values, sp2_bounds)
        if state.lag_value > state.lbd + 1e-12 * max(1.0, abs(state.lbd)):
            state.lbd = max(state.lbd, state.lag_value)
            state.stale_iters = 0
        else:
            state.stale_iters += 1
            if state.stale_iters >= params.eta_halve_after:
                state.eta /= 2.0
                state.stale_iters = 0

        if (state.k - 1) % params.repair_every == 0:
            y_hat = np.stack([
                round_sp2(inst, state.lam, t, pools[t], m_quant=params.quantization_m)
                for t in range(inst.num_slots)
            ])
            plan = solve_repair(
                inst, y_hat, eps,
                exact=params.exact_repair, limits=params.oracle_limits,
            )
            candidate = model.fill_recommendations(inst, plan)
            cost = model.total_cost(inst, candidate)
            if cost < state.upper_bound:
                state.upper_bound = cost
                state.incumbent = candidate

        new_lam, step, d_norm = subgradient_step(state, x_traj, x_slot)
        lam_delta = abs(step) * d_norm
        state.trace.append(TraceRow(
            k=state.k, lag_value=state.lag_value, lbd=state.lbd,
            upper_bound=state.upper_bound, step=step, d_norm=d_norm,
        ))
        state.lam = new_lam
        if d_norm <= params.eps_subgradient:
            gap_closed = d_norm == 0.0
            break
        if lam_delta <= params.eps_multiplier or state.k >= params.max_iters:
            break
        state.k += 1

    return LdaResult(
        incumbent=state.incumbent,
        incumbent_cost=state.upper_bound,
        lbd=state.lbd,
        trace=state.trace,
        iterations=state.k,
        gap_closed=gap_closed,
    )
