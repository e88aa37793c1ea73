"""Per-slot caching subproblem solved by column generation.

For one slot, the LP chooses fractional caching indicators y_i, per-age
occupation x[i, a] (priced by the Lagrangian multipliers), and a convex
combination of recommendation columns per non-cached content, subject to
cache and backhaul capacity.  The column space is exponential, so the LP
is solved over a growing pool: a restricted master problem (RMP) is
solved, its duals price every content's best missing column, and columns
with sufficiently negative reduced cost are added until none remain.

Pricing minimizes  s*h*(cs-cb) * prod(1-p) + sum(beta)  over item sets of
bounded size with one age per related content.  The product is linearized
by quantizing item log-scores q = round(-M*log10(1-p)) and running a
covering-knapsack DP over achievable total scores w: B(w, j, n) is the
cheapest beta-sum over the first j contents using at most n items with
total score >= w.  A post-processing scan over w combines each subset's
exact quantized score with its beta cost; the winning column's reduced
cost is then re-evaluated without quantization, so quantization can never
admit a spurious column, only overlook one (mitigated by raising M).

Because quantization can overlook marginally-negative columns, the loop
certifies termination by exact subset enumeration whenever a content's
candidate-pair count is small enough; beyond that size the DP verdict
stands.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import simplex
from .model import Instance, RecommendationColumn
from .simplex import LE, GE, EQ, LinearProgram, solve_lp

RC_ACCEPT = -1e-6  # reduced-cost threshold for accepting a priced column


class ColumnGenerationStall(Exception):
    """An already-pooled column priced negative: dual values are inconsistent."""


class Sp2Error(Exception):
    pass


@dataclass(frozen=True)
class DualPrices:
    """RMP duals used by pricing.

    pi[i] is the (free-sign) dual of content i's serve-selection equality.
    beta maps (owner, related content, age) to the nonnegative price of
    the corresponding linkage row; absent keys price at zero.
    """

    pi: np.ndarray
    beta: Dict[Tuple[int, int, int], float]

    def beta_at(self, i: int, j: int, a: int) -> float:
        return self.beta.get((i, j, a), 0.0)


@dataclass(frozen=True)
class PricedColumn:
    column: RecommendationColumn
    reduced_cost: float


@dataclass
class SlotPools:
    """Per-content column pools for one slot, persisted across solves."""

    slot: int
    columns: List[List[RecommendationColumn]]
    keys: List[set]
    basis_labels: Optional[Tuple] = None  # warm-start basis of the unfixed RMP
    enum_cache: Dict[int, tuple] = field(default_factory=dict)

    def add(self, i: int, col: RecommendationColumn) -> None:
        self.columns[i].append(col)
        self.keys[i].add(col.items)

    def total_columns(self) -> int:
        return sum(len(c) for c in self.columns)


def new_pools(inst: Instance, t: int) -> SlotPools:
    cols = [[RecommendationColumn.empty(i, t)] for i in range(inst.num_contents)]
    keys = [{frozenset()} for _ in range(inst.num_contents)]
    return SlotPools(slot=t, columns=cols, keys=keys)


def reduced_cost(
    inst: Instance, t: int, i: int, column: RecommendationColumn, duals: DualPrices
) -> float:
    """Exact reduced cost of one column under the given duals."""
    s = float(inst.size[i])
    h = float(inst.requests[t, i])
    value = (
        s * h * (inst.cost_server - inst.cost_cache) * column.miss_prob
        + inst.cost_cache * s * h
        - float(duals.pi[i])
    )
    for (j, a) in column.items:
        value += duals.beta_at(i, j, a)
    return value


def candidate_pairs(inst: Instance, t: int, i: int) -> List[Tuple[int, int]]:
    """(content, age) pairs eligible for content i's columns in slot t."""
    out = []
    for j in sorted(inst.relations[i]):
        for a in inst.ages(t, j):
            out.append((j, a))
    return out


def price_column_dp(
    inst: Instance,
    t: int,
    i: int,
    duals: DualPrices,
    M: int = 10_000,
    N: Optional[int] = None,
) -> PricedColumn:
    """Minimum-reduced-cost column for one content via the quantized DP.

    Accuracy improves as M grows; the returned column's reduced cost is
    always the exact, unquantized value.
    """
    if N is None:
        N = inst.rec_limit
    s = float(inst.size[i])
    h = float(inst.requests[t, i])
    c_term = s * h * (inst.cost_server - inst.cost_cache)
    empty = _pooled_empty(inst, t, i)
    pairs = candidate_pairs(inst, t, i)
    if N <= 0 or not pairs or c_term <= 0.0:
        # Adding items can only add nonnegative beta cost.
        return PricedColumn(empty, reduced_cost(inst, t, i, empty, duals))

    # Group pairs by content, ages ascending; contents ascending.
    grouped: List[Tuple[int, List[Tuple[int, int, float]]]] = []
    for j in sorted({j for j, _ in pairs}):
        entries = []
        for a in inst.ages(t, j):
            p = float(inst.relations[i][j][a])
            q = int(round(-M * math.log10(1.0 - p)))
            entries.append((a, q, max(0.0, duals.beta_at(i, j, a))))
        grouped.append((j, entries))

    reach = sorted((max(q for _, q, _ in entries) for _, entries in grouped),
                   reverse=True)
    W = min(
        sum(q for _, entries in grouped for _, q, _ in entries),
        sum(reach[:N]),
        18 * M,  # 10^-18 of the exponential term is beyond double precision
    )
    ws = np.arange(W + 1)
    INF = float("inf")
    B = np.full((W + 1, N + 1), INF)
    B[0, :] = 0.0
    Q = np.zeros((W + 1, N + 1), dtype=np.int64)
    decisions: List[np.ndarray] = []
    for j, entries in grouped:
        Bj = B.copy()
        Qj = Q.copy()
        Dj = np.full((W + 1, N + 1), -1, dtype=np.int8)
        for n in range(1, N + 1):
            for idx, (a, q, beta) in enumerate(entries):
                wm = np.maximum(0, ws - q)
                candB = beta + B[wm, n - 1]
                candQ = q + Q[wm, n - 1]
                better = (candB < Bj[:, n]) | (
                    (candB == Bj[:, n]) & (candQ > Qj[:, n])
                )
                Bj[better, n] = candB[better]
                Qj[better, n] = candQ[better]
                Dj[better, n] = idx
        B, Q = Bj, Qj
        decisions.append(Dj)

    exp_term = c_term * np.power(10.0, -Q[:, N] / M)
    totals = np.where(np.isfinite(B[:, N]), exp_term + B[:, N], INF)
    w_star = int(np.argmin(totals))

    # Recover the winning subset by replaying the stored decisions.
    items = []
    w_cur, n_cur = w_star, N
    for jj in range(len(grouped) - 1, -1, -1):
        d = int(decisions[jj][w_cur, n_cur])
        if d >= 0:
            j, entries = grouped[jj]
            a, q, _ = entries[d]
            items.append((j, a))
            w_cur = max(0, w_cur - q)
            n_cur -= 1
    col = RecommendationColumn.build(inst, t, i, items)
    if col.items == frozenset():
        col = empty
    return PricedColumn(col, reduced_cost(inst, t, i, col, duals))


def enumerate_best_column(
    inst: Instance, t: int, i: int, duals: DualPrices, N: Optional[int] = None
) -> PricedColumn:
    """Exact minimum-reduced-cost column by subset enumeration.

    Exponential in the candidate-pair count; used to certify termination
    at small sizes and as a reference for the DP.
    """
    if N is None:
        N = inst.rec_limit
    pairs = candidate_pairs(inst, t, i)
    groups: Dict[int, List[Tuple[int, int]]] = {}
    for j, a in pairs:
        groups.setdefault(j, []).append((j, a))
    best_col = _pooled_empty(inst, t, i)
    best_rc = reduced_cost(inst, t, i, best_col, duals)
    contents = sorted(groups)
    for k in range(1, min(N, len(contents)) + 1):
        for combo in itertools.combinations(contents, k):
            for chosen in itertools.product(*(groups[j] for j in combo)):
                col = RecommendationColumn.build(inst, t, i, chosen)
                rc = reduced_cost(inst, t, i, col, duals)
                if rc < best_rc - 1e-15:
                    best_rc, best_col = rc, col
    return PricedColumn(best_col, best_rc)


def _pooled_empty(inst: Instance, t: int, i: int) -> RecommendationColumn:
    return RecommendationColumn.empty(i, t)


def pricing_slack(inst: Instance, t: int, i: int, M: int) -> float:
    """Upper bound on how far the DP's result can sit above the true minimum.

    Every item score is rounded by at most 1/2, so a set of up to N items
    is misjudged by a factor of at most 10 ** (N / (2M)) in each direction,
    both when the DP selects a subset and when the exact value of the
    returned column is compared against the quantized winner.
    """
    s = float(inst.size[i])
    h = float(inst.requests[t, i])
    c_term = s * h * (inst.cost_server - inst.cost_cache)
    n = min(inst.rec_limit, len(candidate_pairs(inst, t, i)))
    return 2.0 * c_term * (10.0 ** (n / (2.0 * M)) - 1.0) + 1e-12


def _subset_cache(inst: Instance, t: int, i: int, pools: SlotPools):
    """All admissible item sets for (t, i), with fixed miss probabilities.

    The candidate pairs depend only on the instance and the slot, so the
    enumeration is built once per pool and re-priced per call with a
    single matrix-vector product.
    """
    cached = pools.enum_cache.get(i)
    if cached is not None:
        return cached
    pairs = candidate_pairs(inst, t, i)
    by_content: Dict[int, List[int]] = {}
    for idx, (j, _) in enumerate(pairs):
        by_content.setdefault(j, []).append(idx)
    contents = sorted(by_content)
    subsets: List[Tuple[int, ...]] = [()]
    for k in range(1, min(inst.rec_limit, len(contents)) + 1):
        for combo in itertools.combinations(contents, k):
            for chosen in itertools.product(*(by_content[j] for j in combo)):
                subsets.append(tuple(chosen))
    miss = np.ones(len(subsets))
    member = np.zeros((len(subsets), max(1, len(pairs))))
    for row, subset in enumerate(subsets):
        for idx in subset:
            j, a = pairs[idx]
            miss[row] *= 1.0 - float(inst.relations[i][j][a])
            member[row, idx] = 1.0
    cached = (pairs, subsets, miss, member)
    pools.enum_cache[i] = cached
    return cached


def _certified_best(
    inst: Instance, t: int, i: int, duals: DualPrices, pools: SlotPools
) -> PricedColumn:
    """Exact minimum-reduced-cost column via the cached enumeration."""
    pairs, subsets, miss, member = _subset_cache(inst, t, i, pools)
    s = float(inst.size[i])
    h = float(inst.requests[t, i])
    c_term = s * h * (inst.cost_server - inst.cost_cache)
    const = inst.cost_cache * s * h - float(duals.pi[i])
    beta_vec = np.array([duals.beta_at(i, j, a) for (j, a) in pairs]) \
        if pairs else np.zeros(1)
    rc = c_term * miss + const + member @ beta_vec
    k = int(np.argmin(rc))
    col = RecommendationColumn.build(inst, t, i, (pairs[idx] for idx in subsets[k]))
    return PricedColumn(col, float(rc[k]))


# --------------------------------------------------------------------------
# Restricted master problem
# --------------------------------------------------------------------------


@dataclass
class _RmpLayout:
    lp: LinearProgram
    xpos: Dict[Tuple[int, int], int]
    vpos: Dict[Tuple[int, int], int]
    row_keys: List[Tuple]
    serve_row: Dict[int, int]
    link_row: Dict[Tuple[int, int, int], int]
    n_vars: int


def _build_rmp(
    inst: Instance,
    lam: np.ndarray,
    t: int,
    pools: SlotPools,
    fixed: Optional[Dict[int, int]],
) -> _RmpLayout:
    I = inst.num_contents
    fixed = fixed or {}
    xpos: Dict[Tuple[int, int], int] = {}
    for i in range(I):
        for a in inst.ages(t, i):
            xpos[(i, a)] = I + len(xpos)
    vpos: Dict[Tuple[int, int], int] = {}
    base = I + len(xpos)
    for i in range(I):
        for k in range(len(pools.columns[i])):
            vpos[(i, k)] = base + len(vpos)
    n = base + len(vpos)

    c = np.zeros(n)
    upper = np.full(n, np.inf)
    for (i, a), col_idx in xpos.items():
        c[col_idx] = -float(lam[t, i, a])
    for (i, k), col_idx in vpos.items():
        c[col_idx] = pools.columns[i][k].expected_cost(inst)
    for i, val in fixed.items():
        if val == 0:
            upper[i] = 0.0

    link_pairs: Dict[Tuple[int, int, int], List[int]] = {}
    for i in range(I):
        for k, col in enumerate(pools.columns[i]):
            for (j, a) in col.items:
                link_pairs.setdefault((i, j, a), []).append(vpos[(i, k)])

    rows: List[np.ndarray] = []
    senses: List[str] = []
    b: List[float] = []
    row_keys: List[Tuple] = []

    def add_row(key, coefs: Dict[int, float], sense: str, rhs: float) -> None:
        row = np.zeros(n)
        for col_idx, val in coefs.items():
            row[col_idx] = val
        rows.append(row)
        senses.append(sense)
        b.append(rhs)
        row_keys.append(key)

    for i in range(I):
        coefs = {xpos[(i, a)]: 1.0 for a in inst.ages(t, i)}
        coefs[i] = -1.0
        add_row(("sel", i), coefs, EQ, 0.0)
    serve_row = {}
    for i in range(I):
        coefs = {vpos[(i, k)]: 1.0 for k in range(len(pools.columns[i]))}
        coefs[i] = coefs.get(i, 0.0) + 1.0
        serve_row[i] = len(rows)
        add_row(("serve", i), coefs, EQ, 1.0)
    link_row = {}
    for key in sorted(link_pairs):
        i, j, a = key
        coefs = {col_idx: 1.0 for col_idx in link_pairs[key]}
        coefs[xpos[(j, a)]] = coefs.get(xpos[(j, a)], 0.0) - 1.0
        link_row[key] = len(rows)
        add_row(("link",) + key, coefs, LE, 0.0)
    add_row(("cache",), {i: float(inst.size[i]) for i in range(I)},
            LE, inst.cache_capacity)
    add_row(("backhaul",), {xpos[(i, 0)]: float(inst.size[i]) for i in range(I)},
            LE, inst.backhaul_capacity)
    for i in sorted(fixed):
        if fixed[i] == 1:
            add_row(("fix", i), {i: 1.0}, GE, 1.0)

    lp = LinearProgram(c=c, A=np.vstack(rows), senses=senses, b=np.array(b))
    return _RmpLayout(lp=lp, xpos=xpos, vpos=vpos, row_keys=row_keys,
                      serve_row=serve_row, link_row=link_row, n_vars=n)


def _labels_of_basis(layout: _RmpLayout, inst: Instance, basis: Sequence[int]) -> Tuple:
    """Translate internal basis column indices into layout-stable labels."""
    n = layout.n_vars
    rev_x = {v: k for k, v in layout.xpos.items()}
    rev_v = {v: k for k, v in layout.vpos.items()}
    labels = []
    for col_idx in basis:
        if col_idx < inst.num_contents:
            labels.append(("y", col_idx))
        elif col_idx < n and col_idx in rev_x:
            labels.append(("x",) + rev_x[col_idx])
        elif col_idx < n:
            labels.append(("v",) + rev_v[col_idx])
        elif col_idx - n < len(layout.row_keys):
            labels.append(("row",) + tuple(layout.row_keys[col_idx - n]))
        else:  # phase-1 artificial left basic on a redundant row
            labels.append(("art", col_idx - n - len(layout.row_keys)))
    return tuple(labels)


def _basis_of_labels(layout: _RmpLayout, inst: Instance, labels) -> Optional[List[int]]:
    row_index = {key: r for r, key in enumerate(layout.row_keys)}
    n = layout.n_vars
    out = []
    seen_rows = set()
    for label in labels:
        kind = label[0]
        if kind == "art":
            return None
        if kind == "y":
            out.append(label[1])
        elif kind == "x":
            col_idx = layout.xpos.get((label[1], label[2]))
            if col_idx is None:
                return None
            out.append(col_idx)
        elif kind == "v":
            col_idx = layout.vpos.get((label[1], label[2]))
            if col_idx is None:
                return None
            out.append(col_idx)
        else:
            key = tuple(label[1:])
            r = row_index.get(key)
            if r is None:
                return None
            seen_rows.add(key)
            out.append(n + r)
    # New rows enter the basis through their own slack columns.
    for r, key in enumerate(layout.row_keys):
        if key not in seen_rows and len(out) < len(layout.row_keys):
            if key[0] == "link":
                out.append(n + r)
    if len(out) != len(layout.row_keys):
        return None
    return out


def _extract_duals(inst: Instance, layout: _RmpLayout, sol) -> DualPrices:
    pi = np.array([sol.duals[layout.serve_row[i]] for i in range(inst.num_contents)])
    beta = {}
    for key, r in layout.link_row.items():
        beta[key] = max(0.0, -float(sol.duals[r]))
    return DualPrices(pi=pi, beta=beta)


@dataclass
class Sp2Result:
    """Fractional optimum of one slot's LP after column generation.

    ``objective`` is the final master value; ``lower_bound`` additionally
    charges each content's certified minimum reduced cost (at most one
    unit of column mass per content), so it never exceeds the optimum of
    the LP over *all* columns and is safe to use inside dual bounds.
    """

    objective: float
    lower_bound: float
    y: np.ndarray                       # [I]
    x: np.ndarray                       # [I, max_age + 1]
    v: Dict[Tuple[int, int], float]     # (content, pool index) -> value
    duals: DualPrices
    min_rc: np.ndarray                  # certified per-content floor
    rmp_solves: int
    columns_added: int


def _snap(arr: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    rounded = np.round(arr)
    return np.where(np.abs(arr - rounded) <= tol, rounded, arr)


def solve_sp2_slot(
    inst: Instance,
    lam: np.ndarray,
    t: int,
    pools: SlotPools,
    fixed: Optional[Dict[int, int]] = None,
    m_quant: int = 10_000,
    exact_certify_pairs: int = 24,
    max_rounds: int = 10_000,
) -> Sp2Result:
    """Column generation to LP optimality for one slot.

    Pools persist across calls (multiplier changes only reprice the x
    variables, so previously generated columns stay valid).  When `fixed`
    pins caching indicators, pricing is skipped for contents pinned to 1,
    whose columns are forced out of the solution anyway.
    """
    if pools.slot != t:
        raise ValueError(f"pool belongs to slot {pools.slot}, not {t}")
    fixed = fixed or {}
    solves = 0
    added_total = 0
    unfixed = not fixed
    warm = pools.basis_labels if unfixed else None
    sol = None
    layout = None
    min_rc = np.zeros(inst.num_contents)

    for _ in range(max_rounds):
        layout = _build_rmp(inst, lam, t, pools, fixed)
        basis = _basis_of_labels(layout, inst, warm) if warm else None
        sol = solve_lp(layout.lp, basis=basis)
        solves += 1
        if sol.status != simplex.OPTIMAL:
            raise Sp2Error(f"slot {t} master LP ended {sol.status}")
        warm = _labels_of_basis(layout, inst, sol.basis)
        if unfixed:
            pools.basis_labels = warm
        duals = _extract_duals(inst, layout, sol)

        added = 0
        min_rc[:] = 0.0
        for i in range(inst.num_contents):
            if fixed.get(i) == 1:
                continue  # columns of pinned-cached contents are forced out
            priced = price_column_dp(inst, t, i, duals, M=m_quant)
            certified = False
            if priced.reduced_cost >= RC_ACCEPT and (
                len(candidate_pairs(inst, t, i)) <= exact_certify_pairs
            ):
                priced = _certified_best(inst, t, i, duals, pools)
                certified = True
            if priced.reduced_cost < RC_ACCEPT:
                if priced.column.items in pools.keys[i]:
                    raise ColumnGenerationStall(
                        f"slot {t} content {i}: pooled column re-priced at "
                        f"{priced.reduced_cost:.3e}"
                    )
                pools.add(i, priced.column)
                added += 1
                min_rc[i] = priced.reduced_cost
            elif certified:
                min_rc[i] = min(0.0, priced.reduced_cost)
            else:
                min_rc[i] = min(
                    0.0, priced.reduced_cost - pricing_slack(inst, t, i, m_quant)
                )
        if added == 0:
            break
        added_total += added
    else:
        raise Sp2Error(f"slot {t}: no convergence within {max_rounds} rounds")

    I = inst.num_contents
    amax = int(inst.aoi_limit.max(initial=0))
    y = _snap(sol.x[:I].copy())
    x = np.zeros((I, amax + 1))
    for (i, a), col_idx in layout.xpos.items():
        x[i, a] = sol.x[col_idx]
    x = _snap(x)
    v = {
        (i, k): float(val)
        for (i, k), col_idx in layout.vpos.items()
        if (val := sol.x[col_idx]) > 1e-12
    }
    return Sp2Result(
        objective=float(sol.objective),
        lower_bound=float(sol.objective + min_rc.sum()),
        y=y,
        x=x,
        v=v,
        duals=duals,
        min_rc=min_rc.copy(),
        rmp_solves=solves,
        columns_added=added_total,
    )
