"""Mean-field (fluid) linear program over fractional state/action occupancies.

Variables for every tau in [t0, T]:  mu[tau][i][s] and alpha[tau][i][s][a].

    maximize   sum_tau gamma**(tau-1) * sum R[tau] * alpha[tau]
    subject to mu[t0] = start
               mu[tau+1][i][s'] = sum_{s,a} alpha[tau][i][s][a] P[tau][i][a][s, s']
               sum C[tau] * alpha[tau] <= B[tau]
               sum_a alpha[tau][i][s][a] = mu[tau][i][s]
               alpha, mu >= 0

Discount weights use absolute time even when t0 > 1, so values of the
sub-problems solved by a receding-horizon planner are directly comparable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InstanceError, RmabInstance, check_state_count
from .simplex import OPTIMAL, LinearProgram, LpSolution, solve, solve_with_scipy


class LpFailure(RuntimeError):
    """The fluid LP did not reach an optimal solution."""


@dataclass
class MeanFieldLP:
    lp: LinearProgram
    t0: int
    horizon: int
    shape: tuple[int, int, int]  # (K, S, A)
    start_basis: list[int] | None = None

    @property
    def steps(self) -> int:
        return self.horizon - self.t0 + 1

    def mu_index(self, t: int, i: int, s: int) -> int:
        K, S, A = self.shape
        block = K * S * (A + 1)
        return (t - self.t0) * block + i * S + s

    def alpha_index(self, t: int, i: int, s: int, a: int) -> int:
        K, S, A = self.shape
        block = K * S * (A + 1)
        return (t - self.t0) * block + K * S + (i * S + s) * A + a

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        K, S, A = self.shape
        blocks = x.reshape(self.steps, K * S * (A + 1))
        mu = blocks[:, :K * S].reshape(self.steps, K, S)
        alpha = blocks[:, K * S:].reshape(self.steps, K, S, A)
        return mu, alpha


@dataclass
class FluidPlan:
    """Optimal fluid trajectory mu[tau], alpha[tau] for tau in [t0, T]."""
    t0: int
    mu: np.ndarray
    alpha: np.ndarray
    value: float
    solution: LpSolution

    def mu_at(self, t: int) -> np.ndarray:
        return self.mu[t - self.t0]

    def alpha_at(self, t: int) -> np.ndarray:
        return self.alpha[t - self.t0]

    def integrality_gap(self, t: int | None = None) -> float:
        """Largest distance of an alpha entry from the nearest integer."""
        a = self.alpha if t is None else self.alpha_at(t)
        return float(np.max(np.abs(a - np.round(a)))) if a.size else 0.0


def build_meanfield_lp(inst: RmabInstance, start, t0: int = 1) -> MeanFieldLP:
    if not 1 <= t0 <= inst.horizon:
        raise InstanceError(f"t0={t0} outside [1, {inst.horizon}]")
    start = check_state_count(inst, start, integral=False)
    K, S, A, T = inst.num_clusters, inst.num_states, inst.num_actions, inst.horizon
    L = T - t0 + 1
    block = K * S * (A + 1)
    n = L * block
    m = K * S + (L - 1) * K * S + L + L * K * S
    Amat = np.zeros((m, n))
    b = np.zeros(m)
    senses: list[str] = []
    rows: list[str] = []
    c = np.zeros(n)
    names: list[str] = []
    for tau in range(t0, T + 1):
        names += [f"mu[{tau}][{i}][{s}]" for i in range(K) for s in range(S)]
        names += [f"alpha[{tau}][{i}][{s}][{a}]" for i in range(K) for s in range(S) for a in range(A)]

    def mu_cols(tau):
        off = (tau - t0) * block
        return np.arange(off, off + K * S).reshape(K, S)

    def alpha_cols(tau):
        off = (tau - t0) * block + K * S
        return np.arange(off, off + K * S * A).reshape(K, S, A)

    r = 0
    cols = mu_cols(t0)
    for i in range(K):
        for s in range(S):
            Amat[r, cols[i, s]] = 1.0
            b[r] = start[i, s]
            senses.append("=")
            rows.append(f"init[{i}][{s}]")
            r += 1
    for tau in range(t0, T + 1):
        ac = alpha_cols(tau)
        c[ac] = inst.weight(tau) * inst.R(tau)
        if tau < T:
            nxt = mu_cols(tau + 1)
            P = inst.P(tau)  # (K, A, S, S')
            for i in range(K):
                for s2 in range(S):
                    Amat[r, nxt[i, s2]] = 1.0
                    # coefficient of alpha[i][s][a] is -P[i][a][s][s2]
                    Amat[r, ac[i]] = -P[i, :, :, s2].T
                    senses.append("=")
                    rows.append(f"flow[{tau}][{i}][{s2}]")
                    r += 1
        Amat[r, ac] = inst.C(tau)
        b[r] = inst.budget(tau)
        senses.append("<=")
        rows.append(f"budget[{tau}]")
        r += 1
        mc = mu_cols(tau)
        for i in range(K):
            for s in range(S):
                Amat[r, ac[i, s]] = 1.0
                Amat[r, mc[i, s]] = -1.0
                senses.append("=")
                rows.append(f"consistency[{tau}][{i}][{s}]")
                r += 1
    assert r == m
    lp = LinearProgram(c=c, A=Amat, b=b, senses=senses, var_names=names, row_names=rows)
    # warm start: every arm on its zero-cost action, budget slacks basic
    basis = []
    budget_rows = [j for j, name in enumerate(rows) if name.startswith("budget")]
    for tau in range(t0, T + 1):
        basis += mu_cols(tau).ravel().tolist()
        z = inst.zero_action(tau)
        ac = alpha_cols(tau)
        basis += [int(ac[i, s, z[i, s]]) for i in range(K) for s in range(S)]
    basis += [n + j for j in budget_rows]
    return MeanFieldLP(lp=lp, t0=t0, horizon=T, shape=(K, S, A), start_basis=basis)


def solve_lp(lp: LinearProgram, method: str = "simplex", start_basis=None) -> LpSolution:
    """Solve with the embedded simplex (default) or scipy's HiGHS as a cross-check."""
    if method == "simplex":
        return solve(lp, start_basis=start_basis)
    if method == "bland":
        return solve(lp, pricing="bland", start_basis=start_basis)
    if method == "highs":
        return solve_with_scipy(lp)
    raise ValueError(f"unknown LP method {method!r}")


def mean_field_value(inst: RmabInstance, start, t0: int = 1,
                     method: str = "simplex") -> tuple[float, FluidPlan]:
    """Optimal fluid value V_{t0:T}(start) and the plan achieving it."""
    mf = build_meanfield_lp(inst, start, t0)
    sol = solve_lp(mf.lp, method, mf.start_basis)
    if sol.status != OPTIMAL:
        raise LpFailure(f"fluid LP from t0={t0} ended with status {sol.status}")
    if sol.residual > 1e-7 or sol.min_value < -1e-9:
        raise LpFailure(f"fluid LP solution inaccurate: residual {sol.residual:.3g}, "
                        f"min entry {sol.min_value:.3g}")
    x = np.maximum(sol.x, 0.0)
    mu, alpha = mf.unpack(x)
    return sol.objective, FluidPlan(t0=t0, mu=mu, alpha=alpha, value=sol.objective, solution=sol)
