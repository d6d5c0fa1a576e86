"""Clustered RMAB instances and count-vector helpers.

Time indices in the public API are 1-based (t = 1..T) so that discount
weights read gamma**(t - 1).  Arrays are stored 0-based internally.

Shapes
------
transitions  P : (Tp, K, A, S, S)   Tp = 1 when stationary else T
rewards      R : (Tp, K, S, A)
costs        C : (Tp, K, S, A)
zero_cost_action : (Tp, K, S) ints
budgets      B : (T,)

A state count is an int array (K, S); an action count is an int array
(K, S, A).  Fractional counts use the same shapes with float entries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_TOL = 1e-9
MASS_TOL = 1e-7


class InstanceError(ValueError):
    """Raised for malformed instances, counts or parameters."""


@dataclass(frozen=True)
class RmabInstance:
    transitions: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    budgets: np.ndarray
    cluster_sizes: np.ndarray
    zero_cost_action: np.ndarray
    horizon: int
    discount: float = 1.0
    stationary: bool = True
    name: str = "instance"
    state_names: tuple[str, ...] | None = None
    cluster_names: tuple[str, ...] | None = None

    def __post_init__(self):
        conv = {
            "transitions": np.array(self.transitions, dtype=float),
            "rewards": np.array(self.rewards, dtype=float),
            "costs": np.array(self.costs, dtype=float),
            "budgets": np.array(self.budgets, dtype=float).reshape(-1),
            "cluster_sizes": np.array(self.cluster_sizes, dtype=np.int64).reshape(-1),
            "zero_cost_action": np.array(self.zero_cost_action, dtype=np.int64),
        }
        for key, arr in conv.items():
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "discount", float(self.discount))
        P, R, C = self.transitions, self.rewards, self.costs
        if P.ndim != 5 or P.shape[3] != P.shape[4]:
            raise InstanceError(f"transitions must have shape (Tp,K,A,S,S), got {P.shape}")
        tp, k, a, s, _ = P.shape
        expect_tp = 1 if self.stationary else self.horizon
        if tp != expect_tp:
            raise InstanceError(f"transitions carry {tp} time slices, expected {expect_tp}")
        if R.shape != (tp, k, s, a) or C.shape != (tp, k, s, a):
            raise InstanceError(f"rewards/costs must have shape {(tp, k, s, a)}")
        if self.zero_cost_action.shape != (tp, k, s):
            raise InstanceError(f"zero_cost_action must have shape {(tp, k, s)}")
        if self.budgets.shape != (self.horizon,):
            raise InstanceError(f"budgets must have length T={self.horizon}")
        if self.cluster_sizes.shape != (k,):
            raise InstanceError(f"cluster_sizes must have length K={k}")
        if self.horizon < 1:
            raise InstanceError("horizon must be positive")
        if not 0.0 <= self.discount <= 1.0:
            raise InstanceError("discount must lie in [0, 1]")

    # dimensions
    @property
    def num_clusters(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[3]

    @property
    def total_arms(self) -> int:
        return int(self.cluster_sizes.sum())

    @property
    def r_max(self) -> float:
        return float(self.rewards.max()) if self.rewards.size else 0.0

    @property
    def c_max(self) -> float:
        return float(self.costs.max()) if self.costs.size else 0.0

    # time-indexed accessors (1-based t)
    def _slice(self, t: int) -> int:
        if not 1 <= t <= self.horizon:
            raise InstanceError(f"time index {t} outside [1, {self.horizon}]")
        return 0 if self.stationary else t - 1

    def P(self, t: int) -> np.ndarray:
        """(K, A, S, S) transition slice at time t."""
        return self.transitions[self._slice(t)]

    def R(self, t: int) -> np.ndarray:
        return self.rewards[self._slice(t)]

    def C(self, t: int) -> np.ndarray:
        return self.costs[self._slice(t)]

    def zero_action(self, t: int) -> np.ndarray:
        return self.zero_cost_action[self._slice(t)]

    def budget(self, t: int) -> float:
        self._slice(t)
        return float(self.budgets[t - 1])

    def weight(self, t: int) -> float:
        """Discount weight gamma**(t-1) at absolute time t."""
        return self.discount ** (t - 1)

    def replace(self, **changes) -> "RmabInstance":
        """Copy with some fields changed; budgets are resized when only the horizon moves."""
        fields_ = {f: getattr(self, f) for f in self.__dataclass_fields__}
        if "horizon" in changes and "budgets" not in changes:
            T = int(changes["horizon"])
            b = np.asarray(self.budgets)
            changes["budgets"] = np.resize(b, T) if len(b) else np.zeros(T)
            if len(b) and len(b) < T:
                changes["budgets"][len(b):] = b[-1]
        if "horizon" in changes and not self.stationary and "transitions" not in changes:
            raise InstanceError("changing the horizon of a non-stationary instance needs new tensors")
        fields_.update(changes)
        return RmabInstance(**fields_)


def stationary_instance(P, R, C, budget, cluster_sizes, horizon, discount=1.0,
                        zero_cost_action=None, **kw) -> RmabInstance:
    """Build a stationary instance from one (K,A,S,S) / (K,S,A) slice.

    ``budget`` may be a scalar (repeated over time) or a length-T sequence.
    When ``zero_cost_action`` is omitted, the first zero-cost action of each
    (i, s) is used.
    """
    P = np.asarray(P, dtype=float)[None]
    R = np.asarray(R, dtype=float)[None]
    C = np.asarray(C, dtype=float)[None]
    if zero_cost_action is None:
        zero_cost_action = default_zero_actions(C)
    else:
        zero_cost_action = np.asarray(zero_cost_action, dtype=np.int64)
        if zero_cost_action.ndim == 0:
            zero_cost_action = np.full(C.shape[:3], int(zero_cost_action))
        elif zero_cost_action.ndim == 2:
            zero_cost_action = zero_cost_action[None]
    budgets = np.broadcast_to(np.asarray(budget, dtype=float), (int(horizon),)).copy()
    return RmabInstance(P, R, C, budgets, cluster_sizes, zero_cost_action,
                        horizon=horizon, discount=discount, stationary=True, **kw)


def default_zero_actions(costs: np.ndarray) -> np.ndarray:
    """Index of the first zero-cost action per (t, i, s); -1 where none exists."""
    zero = costs == 0.0
    first = np.argmax(zero, axis=-1)
    return np.where(zero.any(axis=-1), first, -1)


def validate_instance(inst: RmabInstance) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    out: list[str] = []
    P, R, C = inst.transitions, inst.rewards, inst.costs
    tp, K, A, S, _ = P.shape
    label = (lambda t: "*") if inst.stationary else (lambda t: str(t + 1))

    bad = np.argwhere((P < 0) | (P > 1))
    for t, i, a, s, s2 in bad:
        out.append(f"P[t={label(t)}][i={i}][a={a}][{s},{s2}] = {P[t, i, a, s, s2]} outside [0,1]")
    rows = P.sum(axis=-1)
    for t, i, a, s in np.argwhere(np.abs(rows - 1.0) > ROW_TOL):
        out.append(f"P[t={label(t)}][i={i}][a={a}] row {s} sums to {rows[t, i, a, s]:.12g}")
    for t, i, s, a in np.argwhere(R < 0):
        out.append(f"R[t={label(t)}][i={i}][s={s}][a={a}] = {R[t, i, s, a]} is negative")
    for t, i, s, a in np.argwhere(C < 0):
        out.append(f"C[t={label(t)}][i={i}][s={s}][a={a}] = {C[t, i, s, a]} is negative")
    z = inst.zero_cost_action
    for t in range(tp):
        for i in range(K):
            for s in range(S):
                a = int(z[t, i, s])
                if not 0 <= a < A:
                    out.append(f"zero_cost_action[t={label(t)}][i={i}][s={s}] = {a} is not an action")
                elif C[t, i, s, a] != 0.0:
                    out.append(f"zero_cost_action[t={label(t)}][i={i}][s={s}] = {a} has cost {C[t, i, s, a]}")
    for t in np.flatnonzero(inst.budgets < 0):
        out.append(f"B[t={t + 1}] = {inst.budgets[t]} is negative")
    for i in np.flatnonzero(inst.cluster_sizes <= 0):
        out.append(f"cluster_sizes[{i}] = {inst.cluster_sizes[i]} is not positive")
    return out


def _check_alpha(inst: RmabInstance, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    shape = (inst.num_clusters, inst.num_states, inst.num_actions)
    if alpha.shape != shape:
        raise InstanceError(f"action count has shape {alpha.shape}, expected {shape}")
    return alpha


def step_reward(inst: RmabInstance, t: int, alpha) -> float:
    """Undiscounted reward sum_{i,s,a} R[t][i][s][a] * alpha[i][s][a]."""
    return float(np.sum(inst.R(t) * _check_alpha(inst, alpha)))


def step_cost(inst: RmabInstance, t: int, alpha) -> float:
    return float(np.sum(inst.C(t) * _check_alpha(inst, alpha)))


def check_state_count(inst: RmabInstance, mu, integral: bool = True) -> np.ndarray:
    """Validate a state count (K, S) against the cluster sizes; returns it as an array."""
    mu = np.asarray(mu)
    if mu.shape != (inst.num_clusters, inst.num_states):
        raise InstanceError(f"state count has shape {mu.shape}, expected {(inst.num_clusters, inst.num_states)}")
    if np.any(mu < -MASS_TOL):
        raise InstanceError("state count has negative entries")
    mass = mu.sum(axis=1)
    if np.any(np.abs(mass - inst.cluster_sizes) > MASS_TOL):
        raise InstanceError(f"cluster masses {mass.tolist()} differ from sizes {inst.cluster_sizes.tolist()}")
    if integral:
        if np.any(np.abs(mu - np.round(mu)) > 0):
            raise InstanceError("state count must be integral")
        return np.asarray(np.round(mu), dtype=np.int64)
    return mu.astype(float)


def check_action_count(inst: RmabInstance, t: int, mu, alpha, budget_slack: float = 1e-9) -> list[str]:
    """Problems with an integral action count against state ``mu`` at time t."""
    out = []
    alpha = np.asarray(alpha)
    if alpha.shape != (inst.num_clusters, inst.num_states, inst.num_actions):
        return [f"action count has shape {alpha.shape}"]
    if np.any(alpha < 0):
        out.append("negative action counts")
    if not np.issubdtype(alpha.dtype, np.integer) and np.any(alpha != np.round(alpha)):
        out.append("non-integral action counts")
    rows = alpha.sum(axis=2)
    for i, s in np.argwhere(rows != np.asarray(mu)):
        out.append(f"cell (i={i}, s={s}) assigns {rows[i, s]} arms but holds {mu[i, s]}")
    cost = step_cost(inst, t, alpha)
    if cost > inst.budget(t) + budget_slack:
        out.append(f"cost {cost} exceeds budget {inst.budget(t)} at t={t}")
    return out


def all_passive(inst: RmabInstance, t: int, mu) -> np.ndarray:
    """Action count sending every arm to its declared zero-cost action."""
    mu = np.asarray(mu, dtype=np.int64)
    K, S, A = inst.num_clusters, inst.num_states, inst.num_actions
    alpha = np.zeros((K, S, A), dtype=np.int64)
    z = inst.zero_action(t)
    ii, ss = np.meshgrid(np.arange(K), np.arange(S), indexing="ij")
    alpha[ii, ss, z] = mu
    return alpha

