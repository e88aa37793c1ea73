"""Dense two-phase primal simplex with dual values.

Solves  min c.x  s.t.  A x {<=,=,>=} b,  0 <= x <= upper  on a dense
tableau.  Problem sizes here are small (hundreds of rows and columns), so
the implementation favors transparency of the dual values over sparse
performance.

Sign convention for a minimization problem: the dual of a <= row is <= 0,
of a >= row is >= 0, and of an equality row is free.  Strong duality and
complementary slackness can be audited with :func:`verify_optimality`.

Internal column layout (relevant for warm starting): structural variables
occupy columns 0..n-1 and the auxiliary column of internal row r (slack,
surplus, or equality artificial) is column n + r.  Internal rows are the
original rows followed by one <= row per finite positive upper bound.
A returned basis uses these labels and can be fed back via ``basis=``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

LE, EQ, GE = "<=", "=", ">="

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

PIVOT_TOL = 1e-9


class SimplexError(Exception):
    pass


class IterationLimitError(SimplexError):
    """Pivot budget exhausted before reaching a terminal status."""


@dataclass
class LinearProgram:
    """min c.x subject to A x (senses) b, 0 <= x <= upper."""

    c: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    b: np.ndarray
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.asarray(self.A, dtype=float).reshape(len(self.b), len(self.c))
        self.b = np.asarray(self.b, dtype=float)
        if self.upper is None:
            self.upper = np.full(len(self.c), np.inf)
        else:
            self.upper = np.asarray(self.upper, dtype=float)
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A))
                and np.all(np.isfinite(self.b))):
            raise ValueError("LP data must be finite")
        if len(self.senses) != len(self.b):
            raise ValueError("one sense per row required")
        for s in self.senses:
            if s not in (LE, EQ, GE):
                raise ValueError(f"unknown row sense {s!r}")

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.b)


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None        # one per original row
    upper_duals: Optional[np.ndarray] = None  # one per variable (bound rows)
    objective: Optional[float] = None
    basis: Optional[Tuple[int, ...]] = None   # internal labels, see module doc
    iterations: int = 0


class _Tableau:
    """Mutable simplex state over the standardized system."""

    def __init__(self, lp: LinearProgram):
        n, m0 = lp.num_vars, lp.num_rows
        rows = [lp.A]
        b = [lp.b]
        senses = list(lp.senses)
        self.bound_rows: List[int] = []  # variable index per bound row
        for j in range(n):
            u = lp.upper[j]
            if np.isfinite(u) and u > 0:
                e = np.zeros((1, n))
                e[0, j] = 1.0
                rows.append(e)
                b.append(np.array([u]))
                senses.append(LE)
                self.bound_rows.append(j)
        A = np.vstack(rows)
        b = np.concatenate(b)
        m = len(b)

        # Normalize to b >= 0, tracking the flip applied to each row.
        self.flip = np.ones(m)
        for r in range(m):
            if b[r] < 0:
                self.flip[r] = -1.0
                A[r] *= -1.0
                b = b.copy()
                b[r] *= -1.0
                senses[r] = {LE: GE, GE: LE, EQ: EQ}[senses[r]]

        # Aux column per row: slack (<=), surplus (>=), artificial (=).
        aux = np.zeros((m, m))
        self.artificial = np.zeros(n + m, dtype=bool)
        for r in range(m):
            if senses[r] == LE:
                aux[r, r] = 1.0
            elif senses[r] == GE:
                aux[r, r] = -1.0
            else:
                aux[r, r] = 1.0
                self.artificial[n + r] = True
        cols = [A, aux]
        # Extra phase-1 artificials for >= rows.
        self.extra_art_rows = [r for r in range(m) if senses[r] == GE]
        if self.extra_art_rows:
            extra = np.zeros((m, len(self.extra_art_rows)))
            for k, r in enumerate(self.extra_art_rows):
                extra[r, k] = 1.0
            cols.append(extra)
            self.artificial = np.concatenate(
                [self.artificial, np.ones(len(self.extra_art_rows), dtype=bool)]
            )
        self.full = np.hstack(cols)
        self.b = b
        self.n = n
        self.m = m
        self.m0 = m0
        self.senses = senses
        self.n_labeled = n + m  # labels meaningful for warm starts
        # Variables pinned at zero (upper bound 0) can never enter.
        self.barred = np.zeros(self.full.shape[1], dtype=bool)
        for j in range(n):
            if lp.upper[j] <= 0:
                self.barred[j] = True

        self.tab: Optional[np.ndarray] = None  # (m, n_total + 1)
        self.basis: Optional[np.ndarray] = None
        self.iterations = 0

    # -- construction of starting points ------------------------------------

    def crash_basis(self) -> None:
        """Phase-1 starting basis: slacks where possible, artificials elsewhere."""
        n, m = self.n, self.m
        basis = np.empty(m, dtype=int)
        extra_pos = {r: k for k, r in enumerate(self.extra_art_rows)}
        for r in range(m):
            if self.senses[r] == LE:
                basis[r] = n + r
            elif self.senses[r] == EQ:
                basis[r] = n + r  # the equality artificial
            else:
                basis[r] = n + m + extra_pos[r]
        self.basis = basis
        self.tab = np.hstack([self.full, self.b[:, None]]).astype(float)

    def try_warm_basis(self, labels: Sequence[int]) -> bool:
        """Install a caller-provided basis if it is valid and feasible."""
        labels = [int(j) for j in labels]
        if len(labels) != self.m or len(set(labels)) != self.m:
            return False
        if any(j < 0 or j >= self.n_labeled for j in labels):
            return False
        if any(self.barred[j] for j in labels):
            return False
        B = self.full[:, labels]
        try:
            rhs = np.hstack([self.full, self.b[:, None]])
            tab = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(tab)):
            return False
        if np.any(tab[:, -1] < -1e-7):
            return False
        art_level = tab[self.artificial[np.array(labels)], -1]
        if art_level.size and float(np.abs(art_level).max()) > 1e-7:
            return False
        self.basis = np.array(labels, dtype=int)
        self.tab = tab
        self.tab[:, -1] = np.maximum(self.tab[:, -1], 0.0)
        return True

    # -- pivoting ------------------------------------------------------------

    def _pivot(self, r: int, q: int) -> None:
        tab = self.tab
        piv = tab[r, q]
        tab[r] /= piv
        col = tab[:, q].copy()
        col[r] = 0.0
        tab -= np.outer(col, tab[r])
        tab[:, q] = 0.0
        tab[r, q] = 1.0
        self.basis[r] = q
        self.iterations += 1

    def run(self, costs: np.ndarray, rc_tol: float, max_pivots: int,
            degenerate_limit: int) -> str:
        """Primal simplex to optimality for the given phase costs.

        Reduced costs are maintained incrementally and refreshed from the
        tableau periodically and before declaring optimality, so pivot
        drift cannot cause a premature or missed exit.
        """
        tab = self.tab
        blocked = self.barred | self.artificial

        def fresh_red() -> np.ndarray:
            red = costs - costs[self.basis] @ tab[:, :-1]
            return red

        def pick(red: np.ndarray, bland: bool) -> Optional[int]:
            masked = np.where(blocked, np.inf, red)
            masked[self.basis] = np.inf
            if bland:
                elig = np.flatnonzero(masked < -rc_tol)
                return int(elig[0]) if elig.size else None
            q = int(np.argmin(masked))
            return q if masked[q] < -rc_tol else None

        red = fresh_red()
        degenerate_streak = 0
        bland = False
        since_refresh = 0
        while True:
            q = pick(red, bland)
            if q is None:
                if since_refresh == 0:
                    return OPTIMAL
                red = fresh_red()
                since_refresh = 0
                q = pick(red, bland)
                if q is None:
                    return OPTIMAL
            colq = tab[:, q]
            pos = colq > PIVOT_TOL
            if not np.any(pos):
                return UNBOUNDED
            ratios = np.full(self.m, np.inf)
            ratios[pos] = tab[pos, -1] / colq[pos]
            best = float(ratios.min())
            ties = np.flatnonzero(ratios <= best + 1e-12)
            r = int(ties[np.argmin(self.basis[ties])])  # anti-cycling leave rule
            if best < 1e-10:
                degenerate_streak += 1
                if degenerate_streak >= degenerate_limit:
                    bland = True
            else:
                degenerate_streak = 0
                bland = False
            rq = red[q]
            self._pivot(r, q)
            red = red - rq * tab[r, :-1]
            red[q] = 0.0
            since_refresh += 1
            if since_refresh >= 50:
                red = fresh_red()
                since_refresh = 0
            if self.iterations > max_pivots:
                raise IterationLimitError(
                    f"no terminal status within {max_pivots} pivots"
                )

    def drive_out_artificials(self) -> None:
        """Pivot zero-level artificials out of the basis where possible."""
        for r in range(self.m):
            if not self.artificial[self.basis[r]]:
                continue
            row = self.tab[r, :-1]
            cand = np.flatnonzero(
                (np.abs(row) > 1e-7) & ~self.artificial[: len(row)] & ~self.barred
            )
            if cand.size:
                self._pivot(r, int(cand[0]))
            # else: redundant row; the artificial stays basic at level zero.


def solve_lp(
    lp: LinearProgram,
    basis: Optional[Sequence[int]] = None,
    max_pivots: Optional[int] = None,
    degenerate_limit: int = 30,
) -> LpSolution:
    """Solve an LP, returning primal and dual optima.

    ``basis`` warm-starts phase 2 from a previous solution's basis labels;
    an invalid or infeasible basis silently falls back to a cold start.
    Raises :class:`IterationLimitError` if the pivot budget is exhausted,
    which is distinct from the infeasible/unbounded statuses.
    """
    t = _Tableau(lp)
    if max_pivots is None:
        max_pivots = max(2000, 60 * (t.m + t.full.shape[1]))

    warm = basis is not None and t.try_warm_basis(basis)
    if not warm:
        t.crash_basis()
        # Phase 1: minimize artificial infeasibility.
        phase1 = np.zeros(t.full.shape[1])
        phase1[t.artificial] = 1.0
        feas_tol = 1e-8 * max(1.0, float(np.abs(t.b).max(initial=0.0)))
        if float(phase1[t.basis] @ t.tab[:, -1]) > feas_tol:
            status = t.run(phase1, 1e-10, max_pivots, degenerate_limit)
            if status == UNBOUNDED:
                raise SimplexError("phase 1 cannot be unbounded")
            if float(phase1[t.basis] @ t.tab[:, -1]) > feas_tol:
                return LpSolution(status=INFEASIBLE, iterations=t.iterations)
        t.drive_out_artificials()

    costs = np.zeros(t.full.shape[1])
    costs[: t.n] = lp.c
    rc_tol = 1e-10 * max(1.0, float(np.abs(lp.c).max(initial=0.0)))
    status = t.run(costs, rc_tol, max_pivots, degenerate_limit)
    if status == UNBOUNDED:
        return LpSolution(status=UNBOUNDED, iterations=t.iterations)

    return _extract(lp, t, costs)


def _extract(lp: LinearProgram, t: _Tableau, costs: np.ndarray) -> LpSolution:
    # Refactorize from the final basis to wash out pivot drift.
    B = t.full[:, t.basis]
    try:
        xb = np.linalg.solve(B, t.b)
        y_int = np.linalg.solve(B.T, costs[t.basis])
    except np.linalg.LinAlgError:
        xb = t.tab[:, -1].copy()
        cb = costs[t.basis]
        y_int = cb @ np.linalg.pinv(B)
    xb = np.where(np.abs(xb) < 1e-11, 0.0, xb)

    x_full = np.zeros(t.full.shape[1])
    x_full[t.basis] = xb
    x = x_full[: t.n]
    objective = float(lp.c @ x)

    # Undo internal row flips; split bound-row duals from structural rows.
    y = y_int * t.flip
    duals = y[: t.m0].copy()
    upper_duals = np.zeros(t.n)
    for k, j in enumerate(t.bound_rows):
        upper_duals[j] = y[t.m0 + k]

    return LpSolution(
        status=OPTIMAL,
        x=x,
        duals=duals,
        upper_duals=upper_duals,
        objective=objective,
        basis=tuple(int(j) for j in t.basis),
        iterations=t.iterations,
    )


def verify_optimality(lp: LinearProgram, sol: LpSolution) -> dict:
    """Residuals certifying an optimal solution.

    Returns primal feasibility residual, the strong-duality gap, and the
    complementary-slackness residual, all as absolute values.
    """
    assert sol.status == OPTIMAL
    x, y = sol.x, sol.duals
    resid = 0.0
    cs = 0.0
    Ax = lp.A @ x
    for r, s in enumerate(lp.senses):
        slack = Ax[r] - lp.b[r]
        if s == LE:
            resid = max(resid, slack)
        elif s == GE:
            resid = max(resid, -slack)
        else:
            resid = max(resid, abs(slack))
        cs = max(cs, abs(y[r] * slack))
    resid = max(resid, float(np.max(-x, initial=0.0)))
    dual_obj = float(y @ lp.b)
    for j in range(lp.num_vars):
        u = lp.upper[j]
        if np.isfinite(u) and u > 0:
            resid = max(resid, x[j] - u)
            dual_obj += sol.upper_duals[j] * u
            cs = max(cs, abs(sol.upper_duals[j] * (x[j] - u)))
    # Reduced costs must be nonnegative at a lower bound of zero.
    rc = lp.c - lp.A.T @ y - sol.upper_duals
    cs = max(cs, float(np.max(np.abs(rc * x), initial=0.0)))
    gap = abs(sol.objective - dual_obj)
    return {"primal_residual": float(resid), "dual_gap": gap, "cs_residual": float(cs)}


def export_lp_text(lp: LinearProgram, name: str = "problem") -> str:
    """Render the LP in the standard text format used by external solvers."""
    def term(coef: float, j: int) -> str:
        sign = "+" if coef >= 0 else "-"
        return f" {sign} {abs(coef):.12g} x{j}"

    lines = [f"\\ {name}", "Minimize", " obj:" + "".join(
        term(c, j) for j, c in enumerate(lp.c) if c != 0.0) or " obj: 0 x0"]
    lines.append("Subject To")
    for r in range(lp.num_rows):
        body = "".join(term(a, j) for j, a in enumerate(lp.A[r]) if a != 0.0)
        if not body:
            body = " + 0 x0"
        lines.append(f" c{r}:{body} {lp.senses[r]} {lp.b[r]:.12g}")
    lines.append("Bounds")
    for j in range(lp.num_vars):
        u = lp.upper[j]
        if np.isfinite(u):
            lines.append(f" 0 <= x{j} <= {u:.12g}")
        else:
            lines.append(f" x{j} >= 0")
    lines.append("End")
    return "\n".join(lines) + "\n"
