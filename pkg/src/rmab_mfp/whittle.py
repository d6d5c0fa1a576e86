"""Whittle indices for two-action arms, indexability scans and index policies.

The subsidy lambda is added to the reward of the passive action (action 0).
All solvers accept a vector of subsidies and solve the resulting MDPs in one
batch, which keeps indexability scans cheap.

Modes
-----
discounted  infinite horizon with discount gamma < 1.  Default solver is
            policy iteration (exact linear solves); value iteration is kept
            as a cross-check.  Both stop at Bellman residual <= 1e-10.
average     long-run average reward, relative value iteration anchored at
            state 0 with an aperiodicity transform; stops when the span of
            successive differences is <= 1e-10.
finite      backward induction over ``horizon`` steps (discount allowed).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .core import InstanceError, RmabInstance
from .policies import Policy, fill_by_priority

RESIDUAL_TOL = 1e-10
ROOT_TOL = 1e-8  # indices at or below this count as zero when activating
GAP_TOL = 1e-12  # bisection stops early once the Q-gap is this small
MAX_ITER = 1_000_000
APERIODIC_TAU = 0.5


@dataclass(frozen=True)
class IndexMode:
    kind: str  # "discounted" | "average" | "finite"
    gamma: float = 1.0
    horizon: int | None = None

    def __post_init__(self):
        if self.kind == "discounted" and not 0 <= self.gamma < 1:
            raise InstanceError("discounted mode needs 0 <= gamma < 1")
        if self.kind == "finite" and (self.horizon is None or self.horizon < 1):
            raise InstanceError("finite mode needs a positive horizon")
        if self.kind not in ("discounted", "average", "finite"):
            raise InstanceError(f"unknown index mode {self.kind!r}")

    def label(self) -> str:
        if self.kind == "discounted":
            return f"discounted(gamma={self.gamma:g})"
        if self.kind == "finite":
            return f"finite(T={self.horizon}, gamma={self.gamma:g})"
        return "average"


def discounted(gamma: float) -> IndexMode:
    return IndexMode("discounted", gamma)


def average() -> IndexMode:
    return IndexMode("average")


def finite(horizon: int, gamma: float = 1.0) -> IndexMode:
    return IndexMode("finite", gamma, horizon)


@dataclass(frozen=True)
class SubsidizedMdp:
    """One arm's MDP: P (2, S, S) by action, R (S, 2)."""
    P: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if P.ndim != 3 or P.shape[0] != 2 or P.shape[1] != P.shape[2]:
            raise InstanceError("Whittle indices need exactly two actions: P of shape (2, S, S)")
        if R.shape != (P.shape[1], 2):
            raise InstanceError(f"R must have shape {(P.shape[1], 2)}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)

    @property
    def num_states(self) -> int:
        return self.P.shape[1]

    @property
    def r_max(self) -> float:
        return float(np.abs(self.R).max()) if self.R.size else 0.0

    @classmethod
    def from_instance(cls, inst: RmabInstance, cluster: int, t: int = 1) -> "SubsidizedMdp":
        if inst.num_actions != 2:
            raise InstanceError("Whittle indices need exactly two actions")
        return cls(inst.P(t)[cluster], inst.R(t)[cluster])

    def rewards(self, lam) -> np.ndarray:
        """(G, S, 2) rewards with the subsidy added to the passive action."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        out = np.broadcast_to(self.R, (lam.size,) + self.R.shape).copy()
        out[:, :, 0] += lam[:, None]
        return out


@dataclass
class QResult:
    Q: np.ndarray          # (G, S, 2), or (H, G, S, 2) in finite mode
    V: np.ndarray          # (G, S); bias in average mode; first-step values in finite mode
    gain: np.ndarray | None = None
    residual: float = 0.0
    iterations: int = 0

    def gap(self, step: int = 0) -> np.ndarray:
        """Q(s, active) - Q(s, passive), shape (G, S); finite mode uses ``step``."""
        Q = self.Q[step] if self.Q.ndim == 4 else self.Q
        return Q[..., 1] - Q[..., 0]


def _backup(mdp: SubsidizedMdp, Rl: np.ndarray, V: np.ndarray, gamma: float) -> np.ndarray:
    # Q[g, s, a] = Rl[g, s, a] + gamma * sum_t P[a, s, t] V[g, t]
    return Rl + gamma * np.einsum("ast,gt->gsa", mdp.P, V)


def _discounted_pi(mdp, Rl, gamma):
    G, S, _ = Rl.shape
    pol = np.argmax(Rl, axis=2)
    eye = np.eye(S)
    rows = np.arange(S)
    for it in range(1, 10_000):
        Ppi = mdp.P[pol, rows[None, :], :]                 # (G, S, S)
        rpi = np.take_along_axis(Rl, pol[..., None], 2)[..., 0]
        V = np.linalg.solve(eye[None] - gamma * Ppi, rpi[..., None])[..., 0]
        Q = _backup(mdp, Rl, V, gamma)
        cur = np.take_along_axis(Q, pol[..., None], 2)[..., 0]
        best = np.argmax(Q, axis=2)
        better = np.take_along_axis(Q, best[..., None], 2)[..., 0] > cur + 1e-12 * (1 + np.abs(cur))
        if not better.any():
            residual = float(np.abs(Q.max(axis=2) - V).max())
            if residual > RESIDUAL_TOL:
                V, Q, residual, extra = _discounted_vi(mdp, Rl, gamma, V)
                it += extra
            return QResult(Q, V, residual=residual, iterations=it)
        pol = np.where(better, best, pol)
    raise RuntimeError("policy iteration did not converge")


def _discounted_vi(mdp, Rl, gamma, V=None):
    G, S, _ = Rl.shape
    V = np.zeros((G, S)) if V is None else V.copy()
    for it in range(1, MAX_ITER + 1):
        Q = _backup(mdp, Rl, V, gamma)
        V_new = Q.max(axis=2)
        residual = float(np.abs(V_new - V).max()) if V.size else 0.0
        V = V_new
        if residual <= RESIDUAL_TOL:
            Q = _backup(mdp, Rl, V, gamma)
            return V, Q, residual, it
    raise RuntimeError("value iteration hit the iteration cap")


def _average_rvi(mdp, Rl, ref=0, tau=APERIODIC_TAU):
    G, S, _ = Rl.shape
    h = np.zeros((G, S))
    for it in range(1, MAX_ITER + 1):
        Th = tau * _backup(mdp, Rl, h, 1.0).max(axis=2) + (1 - tau) * h
        diff = Th - h
        span = float((diff.max(axis=1) - diff.min(axis=1)).max())
        h = Th - Th[:, [ref]]
        if span <= RESIDUAL_TOL:
            gain = diff[:, ref] / tau
            Q = _backup(mdp, Rl, h, 1.0) - gain[:, None, None]
            return QResult(Q, h, gain=gain, residual=span, iterations=it)
    raise RuntimeError("relative value iteration hit the iteration cap")


def _finite(mdp, Rl, horizon, gamma):
    G, S, _ = Rl.shape
    Q = np.zeros((horizon, G, S, 2))
    V = np.zeros((G, S))
    for k in range(horizon - 1, -1, -1):
        Q[k] = _backup(mdp, Rl, V, gamma)
        V = Q[k].max(axis=2)
    return QResult(Q, V, iterations=horizon)


def q_values_with_subsidy(mdp: SubsidizedMdp, lam, mode: IndexMode, method: str | None = None) -> QResult:
    """Q-values of the subsidized MDP for each subsidy in ``lam`` (scalar or vector)."""
    Rl = mdp.rewards(lam)
    if mode.kind == "discounted":
        if method in (None, "pi"):
            return _discounted_pi(mdp, Rl, mode.gamma)
        if method == "vi":
            V, Q, residual, it = _discounted_vi(mdp, Rl, mode.gamma)
            return QResult(Q, V, residual=residual, iterations=it)
        raise InstanceError(f"unknown discounted solver {method!r}")
    if mode.kind == "average":
        return _average_rvi(mdp, Rl)
    return _finite(mdp, Rl, mode.horizon, mode.gamma)


def q_gap(mdp: SubsidizedMdp, lam, mode: IndexMode, method: str | None = None) -> np.ndarray:
    """(G, S) array of Q(s,1) - Q(s,0) at time 1 of the subsidized problem."""
    return q_values_with_subsidy(mdp, lam, mode, method).gap(0)


class BracketError(InstanceError):
    """No sign change of the Q-gap could be bracketed."""


def whittle_index(mdp: SubsidizedMdp, state: int, mode: IndexMode, verdict: str | None = None,
                  method: str | None = None) -> float:
    """Subsidy at which active and passive are indifferent in ``state`` (bisection).

    Pass ``verdict`` from a scan to refuse states already found non-indexable.
    """
    if verdict == "non-indexable":
        raise InstanceError(f"state {state} is not indexable")
    return float(whittle_indices(mdp, mode, method=method, states=[state])[0])


def whittle_indices(mdp: SubsidizedMdp, mode: IndexMode, method: str | None = None,
                    states=None) -> np.ndarray:
    """Bisection for several states at once (one batched solve per step)."""
    states = np.arange(mdp.num_states) if states is None else np.asarray(states, dtype=int)
    k = states.size
    pick = np.arange(k)

    def g(lams):
        return q_gap(mdp, lams, mode, method)[pick, states]

    bound = mdp.r_max + 1.0
    lo = np.full(k, -bound)
    hi = np.full(k, bound)
    width = 2 * bound
    for _ in range(200):
        bad = g(lo) <= 0
        if not bad.any():
            break
        lo[bad] -= width
        width *= 2
    else:
        raise BracketError("could not bracket the index from below")
    width = 2 * bound
    for _ in range(200):
        bad = g(hi) > 0
        if not bad.any():
            break
        hi[bad] += width
        width *= 2
    else:
        raise BracketError("could not bracket the index from above")
    mid = (lo + hi) / 2
    done = np.zeros(k, dtype=bool)
    for _ in range(400):
        gm = g(mid)
        done |= np.abs(gm) <= GAP_TOL
        up = (gm > 0) & ~done
        lo = np.where(up, mid, lo)
        hi = np.where(~up & ~done, mid, hi)
        if done.all() or np.all((hi - lo)[~done] <= 1e-13 * (1 + np.abs(mid[~done]))):
            break
        mid = np.where(done, mid, (lo + hi) / 2)
    return mid


@dataclass
class ScanResult:
    """Q-gap curves over a subsidy grid plus per-state verdicts."""
    lambdas: np.ndarray
    gaps: np.ndarray              # (G, S)
    verdicts: list[str]
    crossings: list[int]
    mode: IndexMode
    state_names: tuple[str, ...] | None = None

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        buf.write(header)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "lambda", "q_gap"])
        names = self.state_names or tuple(str(s) for s in range(self.gaps.shape[1]))
        for s in range(self.gaps.shape[1]):
            for lam, v in zip(self.lambdas, self.gaps[:, s]):
                w.writerow([names[s], f"{lam:.10g}", f"{v:.10g}"])
        return buf.getvalue()


def default_grid(mdp: SubsidizedMdp, mode: IndexMode, points: int = 2001) -> np.ndarray:
    span = 1.1 * mdp.r_max
    if mode.kind == "discounted":
        span /= (1 - mode.gamma)
    elif mode.kind == "finite":
        span *= mode.horizon
    span = max(span, 1e-6)
    return np.linspace(-span, span, points)


def _verdict(gap: np.ndarray, tol: float = 1e-9) -> tuple[str, int]:
    pos = gap > tol
    changes = int(np.count_nonzero(pos[1:] != pos[:-1]))
    if changes == 1 and pos[0] and not pos[-1]:
        return "indexable", 1
    if changes == 0:
        return "inconclusive", 0
    return "non-indexable", changes


def indexability_scan(mdp: SubsidizedMdp, mode: IndexMode, grid=None, method: str | None = None,
                      state_names=None) -> ScanResult:
    lambdas = default_grid(mdp, mode) if grid is None else np.asarray(grid, dtype=float)
    gaps = q_gap(mdp, lambdas, mode, method)
    verdicts, crossings = [], []
    for s in range(mdp.num_states):
        v, c = _verdict(gaps[:, s])
        verdicts.append(v)
        crossings.append(c)
    return ScanResult(lambdas, gaps, verdicts, crossings, mode, state_names)


@dataclass
class IndexTable:
    values: np.ndarray                 # (K, S)
    mode: IndexMode
    verdicts: list[list[str]] = field(default_factory=list)
    scans: list[ScanResult] = field(default_factory=list)

    def order(self) -> list[tuple[int, int]]:
        """Cells by decreasing index, ties broken by (cluster, state)."""
        K, S = self.values.shape
        cells = [(i, s) for i in range(K) for s in range(S)]
        return sorted(cells, key=lambda c: (-self.values[c], c[0], c[1]))


def compute_index_table(inst: RmabInstance, mode: IndexMode, scan: bool = False, t: int = 1,
                        method: str | None = None) -> IndexTable:
    K = inst.num_clusters
    values, verdicts, scans = [], [], []
    for i in range(K):
        mdp = SubsidizedMdp.from_instance(inst, i, t)
        if scan:
            res = indexability_scan(mdp, mode, method=method, state_names=inst.state_names)
            scans.append(res)
            verdicts.append(res.verdicts)
        values.append(whittle_indices(mdp, mode, method=method))
    return IndexTable(np.array(values), mode, verdicts, scans)


def whittle_policy_step(inst: RmabInstance, t: int, mu, table: IndexTable,
                        positive_only: bool = True) -> np.ndarray:
    """Activate arms in decreasing index order until the budget is spent.

    Cells whose index is not positive stay passive when ``positive_only``.
    The marginal cell gets floor(remaining budget / active cost) active arms.
    """
    if inst.num_actions != 2:
        raise InstanceError("index policies need exactly two actions")
    order = table.order()
    if positive_only:
        order = [c for c in order if table.values[c] > ROOT_TOL]
    return fill_by_priority(inst, t, np.asarray(mu), order)


class WhittlePolicy(Policy):
    """Stationary index policy; mode defaults to discounted with the instance's gamma."""
    name = "whittle"

    def __init__(self, mode: IndexMode | None = None, positive_only: bool = True):
        self.mode = mode
        self.positive_only = positive_only
        self.table: IndexTable | None = None
        self._owner = None

    def reset(self, inst, start):
        if self._owner is not inst:
            mode = self.mode
            if mode is None:
                mode = discounted(inst.discount) if inst.discount < 1 else average()
            self.table = compute_index_table(inst, mode)
            self._owner = inst

    def act(self, inst, t, mu, rng):
        if self._owner is not inst:
            self.reset(inst, mu)
        return whittle_policy_step(inst, t, mu, self.table, self.positive_only)


class WhittleFinitePolicy(Policy):
    """Finite-horizon indices recomputed at every step for the remaining horizon T - t + 1."""
    name = "whittle-finite"

    def __init__(self, positive_only: bool = True):
        self.positive_only = positive_only
        self._tables: dict[int, IndexTable] = {}
        self._owner = None

    def table_at(self, inst, t) -> IndexTable:
        if self._owner is not inst:
            self._tables = {}
            self._owner = inst
        if t not in self._tables:
            mode = finite(inst.horizon - t + 1, inst.discount)
            self._tables[t] = compute_index_table(inst, mode, t=t)
        return self._tables[t]

    def act(self, inst, t, mu, rng):
        return whittle_policy_step(inst, t, mu, self.table_at(inst, t), self.positive_only)
