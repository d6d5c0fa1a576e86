"""Turning fluid plans into integral, budget-feasible actions.

The receding-horizon planner re-solves the fluid LP from the realized state
every step and floors the current-step occupancies; leftover arms take the
declared zero-cost action, so the budget holds exactly.  The one-shot
variant solves once and rescales.  Randomized rounding by systematic
("bucket") sampling is available as an opt-in.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import tail_horizon, truncation_rule
from .core import InstanceError, RmabInstance, check_state_count, step_cost, step_reward
from .lp import FluidPlan, mean_field_value
from .policies import Policy

SNAP = 1e-7  # fluid values this close to an integer are treated as that integer
ROUNDING_MODES = ("floor", "bucket")


def _cell_floor(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.floor(x + SNAP), 0).astype(np.int64)


def floor_action(inst: RmabInstance, t: int, mu, alpha_tilde) -> np.ndarray:
    """Play floor(alpha_tilde) and send leftover arms to the zero-cost action."""
    mu = np.asarray(mu, dtype=np.int64)
    x = np.maximum(np.asarray(alpha_tilde, dtype=float), 0.0)
    z = _cell_floor(x)
    over = z.sum(axis=2) - mu
    if np.any(over > 0):
        # snapping can only overshoot on inputs that do not sum to mu
        z = np.maximum(np.floor(x), 0).astype(np.int64)
        over = z.sum(axis=2) - mu
        for i, s in np.argwhere(over > 0):
            for a in np.argsort(-z[i, s], kind="stable"):
                cut = min(int(over[i, s]), int(z[i, s, a]))
                z[i, s, a] -= cut
                over[i, s] -= cut
                if over[i, s] == 0:
                    break
    if step_cost(inst, t, z) > inst.budget(t) + 1e-9:
        z = np.minimum(z, np.maximum(np.floor(x), 0).astype(np.int64))
    left = mu - z.sum(axis=2)
    zero = inst.zero_action(t)
    K, S = mu.shape
    ii, ss = np.meshgrid(np.arange(K), np.arange(S), indexing="ij")
    z[ii, ss, zero] += left
    return z


def round_counts(x, m: int) -> np.ndarray:
    """Round x to integers z_i in {floor(x_i), ceil(x_i)} with sum m.

    Fractional mass is moved between the entries with the smallest and the
    largest fractional parts until every entry is integral.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if np.any(x < -1e-12):
        raise ValueError("round_counts needs non-negative entries")
    if abs(x.sum() - m) > 1e-7 or int(m) != m:
        raise ValueError(f"entries sum to {x.sum()}, expected integer {m}")
    x = np.maximum(x, 0.0)
    base = np.floor(x)
    f = x - base
    tol = 1e-9
    f[f < tol] = 0.0
    hi = f > 1 - tol
    base[hi] += 1
    f[hi] = 0.0
    live = np.flatnonzero(f > 0)
    while live.size >= 2:
        i = live[np.argmin(f[live])]
        j = live[np.argmax(f[live])]
        if i == j:
            j = live[live != i][0]
        move = min(f[i], 1.0 - f[j])
        f[i] -= move
        f[j] += move
        for k in (i, j):
            if f[k] < tol:
                f[k] = 0.0
            elif f[k] > 1 - tol:
                f[k] = 0.0
                base[k] += 1
        live = np.flatnonzero(f > 0)
    z = base.astype(np.int64)
    # a single leftover fraction comes from round-off; settle it on the sum
    diff = int(m) - int(z.sum())
    if diff:
        cand = np.flatnonzero(x > z if diff > 0 else x < z)
        if cand.size == 0:
            cand = np.flatnonzero(np.abs(x - np.round(x)) > 0) if diff > 0 else np.flatnonzero(z > 0)
        for k in cand[:abs(diff)]:
            z[k] += 1 if diff > 0 else -1
    return z


def bucket_sample(x, u: float) -> np.ndarray:
    """Systematic sampling: exactly k = sum(x) distinct indices, P[i chosen] = x_i.

    With one uniform u in [0, 1) the points l - 1 + u, l = 1..k, are laid
    over the consecutive intervals [sum_{j<i} x_j, sum_{j<=i} x_j); the
    indices they hit form the sample.  (Equivalent to points l - u' with
    u' = 1 - u.)  Returns sorted 0-based indices.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError("bucket_sample needs entries in [0, 1]")
    total = x.sum()
    k = int(round(total))
    if abs(total - k) > 1e-9:
        raise ValueError(f"entries sum to {total}, not an integer")
    if not 0 <= u < 1:
        raise ValueError("u must lie in [0, 1)")
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    x = np.clip(x, 0.0, 1.0)
    cum = np.cumsum(x)
    cum[-1] = max(cum[-1], k)
    points = np.arange(k) + u
    idx = np.searchsorted(cum, points, side="right")
    idx = np.minimum(idx, x.size - 1)
    for j in range(1, k):  # guard against round-off collisions
        if idx[j] <= idx[j - 1]:
            idx[j] = idx[j - 1] + 1
    if idx[-1] >= x.size:
        raise ValueError("bucket_sample could not place all points")
    return idx.astype(np.int64)


def bucket_action(inst: RmabInstance, t: int, mu, alpha_tilde, rng: np.random.Generator) -> np.ndarray:
    """Floor every cell, then hand out each cell's leftover arms by bucket sampling.

    Unbiased for alpha_tilde.  The realized cost can exceed the budget by at
    most K |S| |A| max-cost.
    """
    mu = np.asarray(mu, dtype=np.int64)
    x = np.maximum(np.asarray(alpha_tilde, dtype=float), 0.0)
    z = _cell_floor(x)
    K, S, A = z.shape
    for i in range(K):
        for s in range(S):
            r = int(mu[i, s] - z[i, s].sum())
            u = float(rng.random())
            if r <= 0:
                if r < 0:
                    raise InstanceError(f"cell ({i},{s}) holds {mu[i, s]} arms but alpha sums higher")
                continue
            f = np.clip(x[i, s] - z[i, s], 0.0, 1.0)
            if abs(f.sum() - r) > 1e-6:
                raise InstanceError(f"cell ({i},{s}): fractional parts sum to {f.sum()}, expected {r}")
            f = np.minimum(f * (r / f.sum()), 1.0)
            f *= r / f.sum()
            for a in bucket_sample(f, u):
                z[i, s, a] += 1
    return z


def truncation_horizon(inst: RmabInstance, delta: float | None = None) -> int:
    """Smallest horizon meeting the discounted truncation rule."""
    if inst.discount >= 1:
        raise InstanceError("truncation horizon is undefined for gamma = 1; give a finite T")
    K, S = inst.num_clusters, inst.num_states
    return truncation_rule(inst.total_arms, K, S, delta)


def evaluation_horizon(inst: RmabInstance, delta: float | None = None,
                       rel_tail: float | None = None) -> int:
    """Truncation-rule horizon, lengthened so gamma^(T-1) <= rel_tail when given."""
    T = truncation_horizon(inst, delta)
    if rel_tail is not None:
        T = max(T, tail_horizon(inst.discount, rel_tail))
    return T


@dataclass
class MfpState:
    """What the planner saw and did at one step."""
    t: int
    plan: FluidPlan
    played: np.ndarray
    fluid_reward: float
    slack: float
    integrality_gap: float
    pivots: int
    excess_cost: float

    def predicted_next(self) -> np.ndarray | None:
        t_next = self.t + 1
        if t_next - self.plan.t0 >= len(self.plan.mu):
            return None
        return self.plan.mu_at(t_next)

    def as_info(self) -> dict:
        nxt = self.predicted_next()
        return dict(fluid_reward=self.fluid_reward, slack=self.slack,
                    integrality_gap=self.integrality_gap, lp_pivots=self.pivots,
                    excess_cost=self.excess_cost, lp_value=self.plan.value,
                    predicted_next=None if nxt is None else nxt.copy())


def _round(inst, t, mu, x, rounding, rng):
    if rounding == "floor":
        return floor_action(inst, t, mu, x)
    if rounding == "bucket":
        if rng is None:
            raise InstanceError("bucket rounding needs a random generator")
        return bucket_action(inst, t, mu, x, rng)
    raise InstanceError(f"rounding must be one of {ROUNDING_MODES}")


def _state(inst, t, plan, x, played):
    return MfpState(
        t=t, plan=plan, played=played,
        fluid_reward=step_reward(inst, t, x),
        slack=float(np.maximum(x - played, 0).sum()),
        integrality_gap=plan.integrality_gap(t),
        pivots=plan.solution.pivots,
        excess_cost=max(0.0, step_cost(inst, t, played) - inst.budget(t)),
    )


def mfp_step(inst: RmabInstance, t: int, mu_hat, rounding: str = "floor",
             rng: np.random.Generator | None = None, plan: FluidPlan | None = None):
    """One receding-horizon step: solve the fluid LP over [t, T] from mu_hat and round."""
    mu_hat = check_state_count(inst, mu_hat)
    if plan is None:
        _, plan = mean_field_value(inst, mu_hat, t)
    x = plan.alpha_at(t)
    played = _round(inst, t, mu_hat, x, rounding, rng)
    return played, _state(inst, t, plan, x, played)


def one_shot_policy_step(inst: RmabInstance, t: int, mu_hat, plan: FluidPlan) -> np.ndarray:
    """Follow a plan solved once from t=1, scaled down where the realized state falls short."""
    mu_hat = np.asarray(mu_hat, dtype=np.int64)
    mu_tilde = plan.mu_at(t)
    ratio = np.where(mu_tilde > SNAP, np.minimum(mu_tilde, mu_hat) / np.where(mu_tilde > SNAP, mu_tilde, 1.0), 0.0)
    x = plan.alpha_at(t) * ratio[:, :, None]
    return floor_action(inst, t, mu_hat, x)


class MfpPolicy(Policy):
    """Receding-horizon fluid planner.

    Plans are cached by (t, state) so repeated states across replications
    reuse the same deterministic LP solution.
    """
    name = "mfp"

    def __init__(self, rounding: str = "floor", method: str = "simplex", cache_size: int = 50000):
        if rounding not in ROUNDING_MODES:
            raise InstanceError(f"rounding must be one of {ROUNDING_MODES}")
        self.rounding = rounding
        self.method = method
        self.randomized = rounding == "bucket"
        self.cache_size = cache_size
        self._cache: dict = {}
        self._cache_owner = None
        self.last: MfpState | None = None

    def reset(self, inst, start):
        if self._cache_owner is not inst:
            self._cache = {}
            self._cache_owner = inst
        self.last = None

    def plan_for(self, inst, t, mu) -> FluidPlan:
        key = (t, np.asarray(mu, dtype=np.int64).tobytes())
        plan = self._cache.get(key)
        if plan is None:
            _, plan = mean_field_value(inst, mu, t, method=self.method)
            if len(self._cache) < self.cache_size:
                self._cache[key] = plan
        return plan

    def act(self, inst, t, mu, rng):
        if self._cache_owner is not inst:
            self.reset(inst, mu)
        plan = self.plan_for(inst, t, mu)
        played, self.last = mfp_step(inst, t, mu, self.rounding, rng, plan=plan)
        return played

    def step_info(self):
        return None if self.last is None else self.last.as_info()


class OneShotPolicy(Policy):
    """Solve the fluid LP once from the initial state and follow it."""
    name = "mfp-oneshot"

    def __init__(self, method: str = "simplex"):
        self.method = method
        self.plan: FluidPlan | None = None
        self._key = None

    def reset(self, inst, start):
        key = (id(inst), np.asarray(start).tobytes())
        if self.plan is None or key != self._key:
            _, self.plan = mean_field_value(inst, start, 1, method=self.method)
            self._key = key

    def act(self, inst, t, mu, rng):
        if self.plan is None:
            raise InstanceError("one-shot policy used before reset")
        return one_shot_policy_step(inst, t, mu, self.plan)


def rounding_l1(x, z) -> float:
    """L1 distance between a real vector and its rounding (reported, not bounded)."""
    return float(np.abs(np.asarray(x, dtype=float) - np.asarray(z, dtype=float)).sum())


__all__ = [
    "MfpPolicy", "MfpState", "OneShotPolicy", "bucket_action", "bucket_sample", "evaluation_horizon",
    "floor_action", "mfp_step", "one_shot_policy_step", "round_counts", "rounding_l1",
    "truncation_horizon",
]
