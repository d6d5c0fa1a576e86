"""Dense revised primal simplex with a two-phase start.

Solves   maximize c.x   s.t.  A_i x (<=, =, >=) b_i,  x >= 0.

Pricing is Dantzig (largest reduced cost) while progress is being made and
falls back to Bland's smallest-index rule after a run of degenerate pivots,
switching back after the next non-degenerate pivot.  Pure Bland pricing is
available with ``pricing="bland"``.  Bland mode cannot cycle and Dantzig
mode only runs on strictly improving pivots, so the method terminates.

The basis inverse is kept explicitly and updated by elementary row
operations, with a fresh inverse every ``refactor_every`` pivots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
OPT_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class LinearProgram:
    """maximize c.x subject to row constraints and x >= 0."""
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: list[str]
    var_names: list[str] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.size == 0:
            self.A = self.A.reshape(len(self.b), len(self.c))
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,) or len(self.senses) != m:
            raise ValueError(f"inconsistent LP shapes: A {self.A.shape}, b {self.b.shape}, "
                             f"c {self.c.shape}, {len(self.senses)} senses")
        for s in self.senses:
            if s not in ("<=", "=", ">="):
                raise ValueError(f"unknown relation {s!r}")
        if not self.var_names:
            self.var_names = [f"x{j}" for j in range(n)]
        if not self.row_names:
            self.row_names = [f"r{i}" for i in range(m)]
        if len(self.var_names) != n or len(set(self.var_names)) != n:
            raise ValueError("variable names must be unique, one per column")

    @property
    def num_vars(self) -> int:
        return self.A.shape[1]

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def column(self, name: str) -> int:
        return self.var_names.index(name)

    def dump(self) -> str:
        """Render in the CPLEX-style LP text layout (for debugging only)."""
        def clean(s):
            return "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in s).strip("_")

        def expr(coefs):
            terms = [f"{'+' if v >= 0 else '-'} {abs(v):.12g} {clean(self.var_names[j])}"
                     for j, v in enumerate(coefs) if v != 0.0]
            return " ".join(terms) if terms else "0"

        rel = {"<=": "<=", "=": "=", ">=": ">="}
        lines = ["\\ dense LP, all variables >= 0", "Maximize", f" obj: {expr(self.c)}",
                 "Subject To"]
        for i in range(self.num_rows):
            lines.append(f" {clean(self.row_names[i])}: {expr(self.A[i])} {rel[self.senses[i]]} {self.b[i]:.12g}")
        lines += ["Bounds", " \\ default lower bound 0, no upper bounds", "End", ""]
        return "\n".join(lines)


@dataclass
class LpSolution:
    status: str
    objective: float
    x: np.ndarray
    var_names: list[str]
    pivots: int = 0
    phase1_pivots: int = 0
    bland_pivots: int = 0
    residual: float = 0.0
    min_value: float = 0.0
    basis: list[int] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def value(self, name: str) -> float:
        return float(self.x[self.var_names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.var_names, self.x)}


class _Revised:
    """Revised simplex state over the augmented column set."""

    def __init__(self, A, b, basis, pricing, refactor_every, max_pivots):
        self.A = A
        self.b = b
        self.m, self.N = A.shape
        self.basis = list(basis)
        self.pricing = pricing
        self.refactor_every = refactor_every
        self.max_pivots = max_pivots
        self.pivots = 0
        self.bland_pivots = 0
        self._refactor()

    def _refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B) if self.m else np.zeros((0, 0))
        self.xB = self.Binv @ self.b
        self.xB[np.abs(self.xB) < 1e-13] = 0.0
        self.since_refactor = 0

    def pivot(self, r: int, j: int, col: np.ndarray):
        piv = col[r]
        theta = self.xB[r] / piv
        self.xB -= theta * col
        self.xB[r] = theta
        row = self.Binv[r] / piv
        self.Binv -= np.outer(col, row)
        self.Binv[r] = row
        self.basis[r] = j
        self.pivots += 1
        self.since_refactor += 1
        if self.since_refactor >= self.refactor_every:
            self._refactor()
        else:
            np.maximum(self.xB, 0.0, out=self.xB, where=self.xB > -FEAS_TOL)

    def run(self, c: np.ndarray, allowed: np.ndarray) -> str:
        """Optimize c over the current feasible basis.  Returns a status."""
        degenerate_run = 0
        bland = self.pricing == "bland"
        in_basis = np.zeros(self.N, dtype=bool)
        while True:
            if self.pivots >= self.max_pivots:
                return ITERATION_LIMIT
            in_basis[:] = False
            in_basis[self.basis] = True
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            d[in_basis | ~allowed] = 0.0
            candidates = np.flatnonzero(d > OPT_TOL)
            if candidates.size == 0:
                return OPTIMAL
            use_bland = bland or degenerate_run >= 50
            j = int(candidates[0]) if use_bland else int(candidates[np.argmax(d[candidates])])
            col = self.Binv @ self.A[:, j]
            pos = np.flatnonzero(col > PIVOT_TOL)
            if pos.size == 0:
                return UNBOUNDED
            ratios = self.xB[pos] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * (1.0 + abs(best))]
            if use_bland:
                basis_arr = np.asarray(self.basis)
                r = int(ties[np.argmin(basis_arr[ties])])
                self.bland_pivots += 1
            else:
                r = int(ties[np.argmax(col[ties])])
            degenerate_run = degenerate_run + 1 if best <= FEAS_TOL else 0
            self.pivot(r, j, col)


def solve(lp: LinearProgram, pricing: str = "dantzig", max_pivots: int | None = None,
          refactor_every: int = 64, start_basis: list[int] | None = None) -> LpSolution:
    """Two-phase revised simplex.  Deterministic for identical input.

    ``start_basis`` optionally names a primal feasible basis, one entry per
    row: a structural column index j < n, or n + i for the slack of row i.
    When it checks out (nonsingular, non-negative), phase one is skipped;
    otherwise the solver silently falls back to artificial variables.
    """
    if pricing not in ("dantzig", "bland"):
        raise ValueError("pricing must be 'dantzig' or 'bland'")
    m, n = lp.A.shape
    A = lp.A.copy()
    b = lp.b.copy()
    senses = list(lp.senses)
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0
            senses[i] = {"<=": ">=", ">=": "<=", "=": "="}[senses[i]]

    n_slack = sum(s != "=" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    N = n + n_slack + n_art
    big = np.zeros((m, N))
    big[:, :n] = A
    basis = [0] * m
    is_art = np.zeros(N, dtype=bool)
    k_slack, k_art = n, n + n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            big[i, k_slack] = 1.0
            basis[i] = k_slack
            k_slack += 1
        elif s == ">=":
            big[i, k_slack] = -1.0
            k_slack += 1
        if s != "<=":
            big[i, k_art] = 1.0
            is_art[k_art] = True
            basis[i] = k_art
            k_art += 1

    if max_pivots is None:
        max_pivots = 50 * (m + N) + 1000
    warm = _map_start_basis(start_basis, senses, n, big, b) if start_basis is not None else None
    rs = _Revised(big, b, warm if warm is not None else basis, pricing, refactor_every, max_pivots)
    scale = max(1.0, float(np.abs(b).max()) if m else 1.0)

    phase1_pivots = 0
    if n_art and warm is None:
        c1 = np.where(is_art, -1.0, 0.0)
        status = rs.run(c1, np.ones(N, dtype=bool))
        phase1_pivots = rs.pivots
        if status == ITERATION_LIMIT:
            return _result(lp, rs, ITERATION_LIMIT, phase1_pivots)
        infeas = float(rs.xB[is_art[rs.basis]].sum())
        if infeas > FEAS_TOL * scale * max(1, n_art):
            return _result(lp, rs, INFEASIBLE, phase1_pivots)
        _drive_out_artificials(rs, is_art)

    c2 = np.zeros(N)
    c2[:n] = lp.c
    status = rs.run(c2, ~is_art)
    return _result(lp, rs, status, phase1_pivots)


def _map_start_basis(start_basis, senses, n, big, b):
    m = len(senses)
    if len(start_basis) != m:
        return None
    slack_col = {}
    k = n
    for i, s in enumerate(senses):
        if s != "=":
            slack_col[i] = k
            k += 1
    cols = []
    for v in start_basis:
        if v < n:
            cols.append(int(v))
        elif v - n in slack_col:
            cols.append(slack_col[v - n])
        else:
            return None
    if len(set(cols)) != m:
        return None
    B = big[:, cols]
    try:
        xB = np.linalg.solve(B, b)
    except np.linalg.LinAlgError:
        return None
    if np.any(xB < -FEAS_TOL * max(1.0, float(np.abs(b).max()))):
        return None
    return cols


def _drive_out_artificials(rs: _Revised, is_art: np.ndarray):
    """Pivot zero-level artificials out of the basis where a real column allows it.

    Artificials left behind sit on redundant rows and stay at zero.
    """
    for r in range(rs.m):
        if not is_art[rs.basis[r]]:
            continue
        in_basis = np.zeros(rs.N, dtype=bool)
        in_basis[rs.basis] = True
        row = rs.Binv[r] @ rs.A
        row[is_art | in_basis] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > 1e-7:
            rs.xB[r] = 0.0
            rs.pivot(r, j, rs.Binv @ rs.A[:, j])


def _result(lp: LinearProgram, rs: _Revised, status: str, phase1_pivots: int) -> LpSolution:
    n = lp.num_vars
    full = np.zeros(rs.N)
    full[rs.basis] = rs.xB
    x = full[:n].copy()
    x[np.abs(x) < 1e-13] = 0.0
    Ax = lp.A @ x
    viol = np.zeros(lp.num_rows)
    for i, s in enumerate(lp.senses):
        if s == "=":
            viol[i] = abs(Ax[i] - lp.b[i])
        elif s == "<=":
            viol[i] = max(0.0, Ax[i] - lp.b[i])
        else:
            viol[i] = max(0.0, lp.b[i] - Ax[i])
    objective = float(lp.c @ x) if status in (OPTIMAL, ITERATION_LIMIT) else math.nan
    if status == UNBOUNDED:
        objective = math.inf
    return LpSolution(status=status, objective=objective, x=x, var_names=list(lp.var_names),
                      pivots=rs.pivots, phase1_pivots=phase1_pivots, bland_pivots=rs.bland_pivots,
                      residual=float(viol.max()) if viol.size else 0.0,
                      min_value=float(x.min()) if x.size else 0.0, basis=list(rs.basis))


def solve_with_scipy(lp: LinearProgram) -> LpSolution:
    """Cross-check route through scipy's HiGHS interface (optional dependency)."""
    from scipy.optimize import linprog

    eq = [i for i, s in enumerate(lp.senses) if s == "="]
    le = [i for i, s in enumerate(lp.senses) if s == "<="]
    ge = [i for i, s in enumerate(lp.senses) if s == ">="]
    A_ub = np.vstack([lp.A[le], -lp.A[ge]]) if le or ge else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if le or ge else None
    res = linprog(-lp.c, A_ub=A_ub, b_ub=b_ub,
                  A_eq=lp.A[eq] if eq else None, b_eq=lp.b[eq] if eq else None,
                  bounds=(0, None), method="highs")
    status = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, INFEASIBLE)
    x = np.asarray(res.x) if res.x is not None else np.zeros(lp.num_vars)
    obj = float(lp.c @ x) if status == OPTIMAL else math.nan
    return LpSolution(status=status, objective=obj, x=x, var_names=list(lp.var_names),
                      pivots=int(getattr(res, "nit", 0)))
