"""Instance generators.

Every generator returns ``(instance, start)``.  Active actions cost 1,
passive (action 0) costs 0 and is the declared zero-cost action.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bounds import truncation_rule
from .core import InstanceError, RmabInstance, stationary_instance

# state labels
EX1_STATES = ("start", "engaged", "dropout")
EX1_CLUSTERS = ("reliable", "greedy")
EX2_STATES = ("reliable_start", "reliable_engaged", "greedy_start", "greedy_engaged", "dropout")
RS, RE, GS, GE, D = range(5)
EX4_STATES = tuple(f"s{k}" for k in range(1, 9))


def _unit_costs(K: int, S: int, A: int = 2) -> np.ndarray:
    C = np.ones((K, S, A))
    C[:, :, 0] = 0.0
    return C


def _default_horizon(horizon, gamma, N, K, S):
    if horizon is not None:
        if horizon < 1:
            raise InstanceError("horizon must be positive")
        return int(horizon)
    if gamma >= 1:
        raise InstanceError("an explicit horizon is required when gamma = 1")
    return truncation_rule(N, K, S)


def _check_open(name, x, lo=0.0, hi=1.0):
    if not lo < x < hi:
        raise InstanceError(f"{name}={x} must lie in ({lo}, {hi})")


def example1(n: int = 10, epsilon: float = 0.1, gamma: float = 0.9, horizon: int | None = None):
    """Reliable and greedy arm types, three states each.

    Active moves start -> engaged for both types; reliable arms stay engaged
    under the active action while greedy arms drop out; passive always sends
    the arm to dropout, which is absorbing.  Engaged pays 1 - epsilon
    (reliable) or 1 (greedy).  n arms of each type, budget n.
    """
    if n < 1:
        raise InstanceError("n must be at least 1")
    _check_open("epsilon", epsilon)
    _check_open("gamma", gamma)
    S_, E_, D_ = 0, 1, 2
    P = np.zeros((2, 2, 3, 3))
    P[:, 0, :, D_] = 1.0
    # reliable
    P[0, 1, S_, E_] = 1.0
    P[0, 1, E_, E_] = 1.0
    P[0, 1, D_, D_] = 1.0
    # greedy
    P[1, 1, S_, E_] = 1.0
    P[1, 1, E_, D_] = 1.0
    P[1, 1, D_, D_] = 1.0
    R = np.zeros((2, 3, 2))
    R[0, E_, :] = 1.0 - epsilon
    R[1, E_, :] = 1.0
    T = _default_horizon(horizon, gamma, 2 * n, 2, 3)
    inst = stationary_instance(P, R, _unit_costs(2, 3), n, [n, n], T, gamma, 0,
                               name="example1", state_names=EX1_STATES, cluster_names=EX1_CLUSTERS)
    start = np.array([[n, 0, 0], [n, 0, 0]], dtype=np.int64)
    return inst, start


def _merged_skeleton(epsilon: float):
    P = np.zeros((2, 5, 5))
    P[0, :, D] = 1.0
    P[1, RS, RE] = 1.0
    P[1, RE, RE] = 1.0
    P[1, GS, GE] = 1.0
    P[1, GE, D] = 1.0
    P[1, D, D] = 1.0
    R = np.zeros((5, 2))
    R[RE, :] = 1.0 - epsilon
    R[GE, :] = 1.0
    return P, R


def _with_dummy(P, R):
    S = P.shape[-1]
    P2 = np.zeros((2, S + 1, S + 1))
    P2[:, :S, :S] = P
    P2[:, S, RS] = 0.5
    P2[:, S, GS] = 0.5
    R2 = np.zeros((S + 1, 2))
    R2[:S] = R
    return P2, R2


def example2(n: int = 10, epsilon: float = 0.1, gamma: float = 0.9, horizon: int | None = None,
             dummy_start: bool = False):
    """Both arm types merged into one five-state cluster (plus an optional dummy start)."""
    if n < 1:
        raise InstanceError("n must be at least 1")
    _check_open("epsilon", epsilon)
    _check_open("gamma", gamma)
    P, R = _merged_skeleton(epsilon)
    names = EX2_STATES
    if dummy_start:
        P, R = _with_dummy(P, R)
        names = names + ("dummy_start",)
    S = P.shape[-1]
    T = _default_horizon(horizon, gamma, 2 * n, 1, S)
    inst = stationary_instance(P[None], R[None], _unit_costs(1, S), n, [2 * n], T, gamma, 0,
                               name="example2", state_names=names)
    start = np.zeros((1, S), dtype=np.int64)
    if dummy_start:
        start[0, S - 1] = 2 * n
    else:
        start[0, RS] = start[0, GS] = n
    return inst, start


def example3(eta_s: float = 0.05, eta_r: float = 0.1, eta_d: float = 0.1, epsilon: float = 0.01,
             n: int = 50, gamma: float = 0.95, horizon: int | None = None,
             literal_engaged_row: bool = False):
    """Irreducible variant of the merged example.

    Changes to the merged skeleton:
      greedy start, passive   -> greedy engaged w.p. eta_s, else dropout
      reliable start, passive -> reliable engaged w.p. eta_s, else dropout
      reliable engaged, active -> dropout w.p. eta_r, else stays engaged
      dropout, any action     -> greedy start / reliable start w.p. eta_d each

    With ``literal_engaged_row`` the passive row of reliable-engaged also
    becomes (stay 1 - eta_r, drop eta_r); by default it keeps the skeleton's
    passive -> dropout transition.
    """
    for name, v in (("eta_s", eta_s), ("eta_r", eta_r), ("epsilon", epsilon)):
        _check_open(name, v)
    if not 0 < eta_d <= 0.5:
        raise InstanceError("eta_d must lie in (0, 0.5]")
    if n < 1:
        raise InstanceError("n must be at least 1")
    if not 0 < gamma <= 1:
        raise InstanceError("gamma must lie in (0, 1]")
    P, R = _merged_skeleton(epsilon)
    P[0, GS] = 0.0
    P[0, GS, GE] = eta_s
    P[0, GS, D] = 1 - eta_s
    P[0, RS] = 0.0
    P[0, RS, RE] = eta_s
    P[0, RS, D] = 1 - eta_s
    P[1, RE] = 0.0
    P[1, RE, D] = eta_r
    P[1, RE, RE] = 1 - eta_r
    if literal_engaged_row:
        P[0, RE] = 0.0
        P[0, RE, RE] = 1 - eta_r
        P[0, RE, D] = eta_r
    for a in range(2):
        P[a, D] = 0.0
        P[a, D, GS] = eta_d
        P[a, D, RS] = eta_d
        P[a, D, D] = 1 - 2 * eta_d
    T = _default_horizon(horizon, gamma, 2 * n, 1, 5)
    inst = stationary_instance(P[None], R[None], _unit_costs(1, 5), n, [2 * n], T, gamma, 0,
                               name="example3", state_names=EX2_STATES)
    start = np.zeros((1, 5), dtype=np.int64)
    start[0, RS] = start[0, GS] = n
    return inst, start


def lowerbound_epsilon(n: int, T: int, delta: float) -> float:
    return (2 + delta / n) / (T - 1)


def lowerbound_example(n: int = 600, T: int = 13, delta: float = 1.0):
    """Eight-state instance where the fluid planner loses order T sqrt(N).

    States s1..s8 are indices 0..7.  2n arms start in s1, n in s7, budget n.
    s6 pays 1 and s8 pays 1 - eps with eps = (2 + delta/n)/(T - 1).
    """
    if T < 4:
        raise InstanceError("T must be at least 4")
    if delta <= 0:
        raise InstanceError("delta must be positive")
    if n < 1:
        raise InstanceError("n must be at least 1")
    eps = lowerbound_epsilon(n, T, delta)
    if not 0 < eps < 1:
        raise InstanceError(f"epsilon={eps} outside (0, 1); increase T or lower delta")
    s = {k: k - 1 for k in range(1, 9)}
    P = np.zeros((2, 8, 8))
    P[1, s[1], s[2]] = 1.0
    P[0, s[1], s[3]] = 1.0
    P[0, s[2], s[4]] = P[0, s[2], s[5]] = 0.5
    P[1, s[2], s[5]] = 1.0
    P[1, s[3], s[4]] = P[1, s[3], s[5]] = 0.5
    P[0, s[3], s[5]] = 1.0
    P[1, s[4], s[6]] = 1.0
    P[0, s[4], s[5]] = 1.0
    P[:, s[5], s[5]] = 1.0
    P[1, s[6], s[6]] = 1.0
    P[0, s[6], s[5]] = 1.0
    P[1, s[7], s[8]] = 1.0
    P[0, s[7], s[5]] = 1.0
    P[1, s[8], s[8]] = 1.0
    P[0, s[8], s[5]] = 1.0
    R = np.zeros((8, 2))
    R[s[6], :] = 1.0
    R[s[8], :] = 1.0 - eps
    inst = stationary_instance(P[None], R[None], _unit_costs(1, 8), n, [3 * n], T, 1.0, 0,
                               name="lowerbound", state_names=EX4_STATES)
    start = np.zeros((1, 8), dtype=np.int64)
    start[0, s[1]] = 2 * n
    start[0, s[7]] = n
    return inst, start


def synthetic_clustered(K: int = 2, num_states: int = 3, num_actions: int = 2, N: int = 100,
                        T: int = 5, seed: int = 0,
                        gamma: float = 1.0, budget_fraction: float = 0.1,
                        reward_pattern: str = "random"):
    """Random clustered instance with Dirichlet transition rows.

    Action 0 is free, every other action costs 1, the budget is
    ``budget_fraction * N`` each step.  ``reward_pattern="engagement"``
    (two states only) pays 1 in state 1 regardless of action and makes
    non-passive actions raise the chance of moving to state 1.
    """
    if min(K, num_states, num_actions, N, T) < 1 or N < K:
        raise InstanceError("dimensions must be positive and N >= K")
    rng = np.random.default_rng(seed)
    S, A = num_states, num_actions
    P = rng.dirichlet(np.ones(S), size=(K, A, S))
    if reward_pattern == "random":
        R = rng.random((K, S, A))
    elif reward_pattern == "engagement":
        if S != 2:
            raise InstanceError("engagement pattern needs exactly two states")
        R = np.zeros((K, S, A))
        R[:, 1, :] = 1.0
        lift = rng.random((K, A, S))
        lift[:, 0, :] = 0.0
        P[..., 1] = P[:, :1, :, 1] + lift * (1 - P[:, :1, :, 1])
        P[..., 0] = 1 - P[..., 1]
    else:
        raise InstanceError(f"unknown reward pattern {reward_pattern!r}")
    sizes = np.full(K, N // K)
    sizes[: N % K] += 1
    start = np.stack([rng.multinomial(int(n_i), np.full(S, 1 / S)) for n_i in sizes]).astype(np.int64)
    inst = stationary_instance(P, R, _unit_costs(K, S, A), budget_fraction * N, sizes, T, gamma, 0,
                               name=f"synthetic-{seed}")
    return inst, start


def tiny_instance(seed: int = 0, max_arms: int = 5, max_states: int = 3, max_horizon: int = 4,
                  max_clusters: int = 2):
    """Small random two-action instance for exact-DP comparisons."""
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, max_clusters + 1))
    S = int(rng.integers(2, max_states + 1))
    T = int(rng.integers(1, max_horizon + 1))
    N = int(rng.integers(K, max_arms + 1))
    sizes = np.full(K, N // K)
    sizes[: N % K] += 1
    P = rng.dirichlet(np.full(S, 0.7), size=(K, 2, S))
    R = rng.random((K, S, 2)).round(3)
    budget = float(rng.integers(0, N + 1))
    gamma = float(rng.choice([1.0, 0.9]))
    inst = stationary_instance(P, R, _unit_costs(K, S), budget, sizes, T, gamma, 0, name=f"tiny-{seed}")
    start = np.stack([rng.multinomial(int(n_i), np.full(S, 1 / S)) for n_i in sizes]).astype(np.int64)
    return inst, start


@dataclass
class GeneratorSpec:
    """A named generator plus its keyword parameters."""
    name: str
    params: dict = field(default_factory=dict)

    def build(self) -> tuple[RmabInstance, np.ndarray]:
        if self.name not in GENERATORS:
            raise InstanceError(f"unknown generator {self.name!r}; choose from {sorted(GENERATORS)}")
        fn, types = GENERATORS[self.name]
        kw = {}
        for k, v in self.params.items():
            if k not in types:
                raise InstanceError(f"generator {self.name!r} has no parameter {k!r}; "
                                    f"accepted: {sorted(types)}")
            kw[k] = _coerce(types[k], v, k)
        return fn(**kw)


def _coerce(kind, v, key):
    try:
        if kind is bool:
            if isinstance(v, str):
                if v.lower() in ("1", "true", "yes"):
                    return True
                if v.lower() in ("0", "false", "no"):
                    return False
                raise ValueError(v)
            return bool(v)
        if kind is int:
            f = float(v)
            if f != int(f):
                raise ValueError(v)
            return int(f)
        return kind(v)
    except (TypeError, ValueError):
        raise InstanceError(f"parameter {key!r} expects {kind.__name__}, got {v!r}") from None


GENERATORS = {
    "example1": (example1, dict(n=int, epsilon=float, gamma=float, horizon=int)),
    "example2": (example2, dict(n=int, epsilon=float, gamma=float, horizon=int, dummy_start=bool)),
    "example3": (example3, dict(eta_s=float, eta_r=float, eta_d=float, epsilon=float, n=int,
                                gamma=float, horizon=int, literal_engaged_row=bool)),
    "lowerbound": (lowerbound_example, dict(n=int, T=int, delta=float)),
    "synthetic": (synthetic_clustered, dict(K=int, num_states=int, num_actions=int, N=int, T=int,
                                            seed=int, gamma=float, budget_fraction=float,
                                            reward_pattern=str)),
    "tiny": (tiny_instance, dict(seed=int, max_arms=int, max_states=int, max_horizon=int,
                                 max_clusters=int)),
}
