"""Closed-form gap, truncation and concentration formulas.

Logarithms are natural throughout.  The formulas are kept exactly as stated
by the theory (no constants tightened), so plotted bounds can be loose.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .core import InstanceError, RmabInstance

LOG_NOTE = "natural logarithm in all concentration and gap formulas"


@dataclass
class BoundReport:
    name: str
    value: float
    inputs: dict = field(default_factory=dict)
    measured: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def _dims(inst: RmabInstance):
    return inst.total_arms, inst.num_clusters, inst.num_states, inst.num_actions


# concentration of sums of categorical vectors ---------------------------------

def multinomial_eps(k: int, n: int, delta: float) -> float:
    """L1 deviation exceeded with probability at most delta by a sum of n categorical vectors."""
    return math.sqrt(2 * math.log(2) * k * n + 2 * n * math.log(1 / delta))


def drift_mean_bound(N: int, K: int, S: int, A: int) -> float:
    return math.sqrt(K * S * N) + K * S * A


def drift_quantile_bound(N: int, K: int, S: int, A: int, delta: float) -> float:
    return multinomial_eps(K * S, N, delta) + K * S * A


def lipschitz_bound(T: int, t: int, r_max: float, l1: float) -> float:
    """Largest fluid value change when the start moves by ``l1`` in L1 norm."""
    return (T - t + 1) * r_max * l1 / 2


# truncation horizons ------------------------------------------------------------

def truncation_rule(N: int, K: int, S: int, delta: float | None = None) -> int:
    """Smallest integer horizon satisfying the infinite-horizon truncation rule."""
    if delta is None:
        return math.ceil(2 * math.sqrt(N) / math.sqrt(K * S) + 1)
    if not 0 < delta < 1:
        raise InstanceError("delta must lie in (0, 1)")
    return math.ceil(math.sqrt(2 * N) / math.sqrt(math.log(2) * K * S + math.log(1 / delta)) + 1)


def tail_bound(N: int, r_max: float, gamma: float, T: int) -> float:
    """Reward that a horizon-T truncation can discard: N R_max gamma^T / (1 - gamma)."""
    if gamma >= 1:
        raise InstanceError("tail bound needs gamma < 1")
    return N * r_max * gamma ** T / (1 - gamma)


def tail_horizon(gamma: float, rel_tol: float) -> int:
    """Smallest T with gamma^(T-1) <= rel_tol (relative weight of the dropped tail)."""
    if not 0 < gamma < 1:
        raise InstanceError("tail horizon needs 0 < gamma < 1")
    return 1 + math.ceil(math.log(rel_tol) / math.log(gamma))


# optimality gaps ----------------------------------------------------------------

def finite_gap(T: int, r_max: float, N: int, K: int, S: int, A: int,
               delta: float | None = None) -> float:
    if delta is None:
        root = math.sqrt(K * S * N)
    else:
        root = math.sqrt(2 * math.log(2) * K * S * N + 2 * N * math.log(T / delta))
    return T * T * r_max / 4 * (root + 5 * K * S * A)


def discounted_gap(gamma: float, r_max: float, N: int, K: int, S: int, A: int,
                   delta: float | None = None) -> float:
    if not gamma < 1:
        raise InstanceError("discounted gap needs gamma < 1")
    if delta is None:
        root = math.sqrt(K * S * N)
    else:
        root = math.sqrt(2 * math.log(2) * K * S * N + 2 * N * math.log(N / delta))
    return r_max * ((2 - gamma) * K * S * A + gamma * root) / (2 * (1 - gamma) ** 2)


def finite_horizon_gap(inst: RmabInstance, delta: float | None = None) -> float:
    """Finite-horizon optimality gap of the receding-horizon fluid planner."""
    N, K, S, A = _dims(inst)
    return finite_gap(inst.horizon, inst.r_max, N, K, S, A, delta)


def discounted_horizon_gap(inst: RmabInstance, delta: float | None = None) -> float:
    """Discounted infinite-horizon gap when planning over a truncated horizon."""
    N, K, S, A = _dims(inst)
    return discounted_gap(inst.discount, inst.r_max, N, K, S, A, delta)


def lowerbound_gap(n: int, T: int, delta: float) -> float:
    """Shortfall forced on the fluid planner by the eight-state lower-bound instance."""
    if T < 4:
        raise InstanceError("lower-bound gap needs T >= 4")
    return (T - 3) * math.sqrt(n / (6 * math.pi)) - delta


def bound_reports(inst: RmabInstance, delta: float | None = None) -> list[BoundReport]:
    N, K, S, A = _dims(inst)
    inputs = dict(N=N, K=K, S=S, A=A, T=inst.horizon, gamma=inst.discount,
                  delta=delta, r_max=inst.r_max)
    out = [BoundReport("finite_horizon_gap", finite_horizon_gap(inst, delta), inputs)]
    if inst.discount < 1:
        out.append(BoundReport("discounted_gap", discounted_horizon_gap(inst, delta), inputs))
        out.append(BoundReport("truncation_horizon", float(truncation_rule(N, K, S, delta)), inputs))
        out.append(BoundReport("truncation_tail", tail_bound(N, inst.r_max, inst.discount, inst.horizon), inputs))
    out.append(BoundReport("drift_mean", drift_mean_bound(N, K, S, A), inputs))
    if delta is not None:
        out.append(BoundReport("drift_quantile", drift_quantile_bound(N, K, S, A, delta), inputs))
    return out
