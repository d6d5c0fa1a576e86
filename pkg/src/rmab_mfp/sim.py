"""Count-level simulator, Monte Carlo evaluation, exact DP oracle and
statistical checks of the concentration and drift bounds.

Randomness is keyed, not streamed: the next-state draw of cell (i, s, a) at
time t of a trajectory with seed ``seed`` comes from its own generator
seeded by SeedSequence(seed, spawn_key=(0, t, i, s, a)); policy randomness
at time t uses spawn_key (1, t).  Results therefore do not depend on the
order in which cells are visited or on how replications are spread over
worker processes.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bounds import drift_mean_bound, drift_quantile_bound, multinomial_eps
from .core import InstanceError, RmabInstance, check_action_count, check_state_count, step_cost, step_reward
from .meanfield import MfpPolicy
from .policies import Policy

Z95 = 1.96


class PolicyError(RuntimeError):
    """A policy returned an action count that does not match the state."""


def cell_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def sample_multinomial(rng: np.random.Generator, n: int, p: np.ndarray) -> np.ndarray:
    """Multinomial draw as a chain of conditional binomials."""
    out = np.zeros(p.size, dtype=np.int64)
    left = int(n)
    mass = 1.0
    last = p.size - 1
    for k in range(last):
        if left == 0:
            break
        pk = p[k]
        if pk <= 0:
            continue
        q = min(1.0, pk / mass) if mass > 0 else 1.0
        x = int(rng.binomial(left, q))
        out[k] = x
        left -= x
        mass -= pk
    out[last] += left
    return out


def next_counts(inst: RmabInstance, t: int, alpha: np.ndarray, seed: int) -> np.ndarray:
    K, S, A = alpha.shape
    P = inst.P(t)
    nxt = np.zeros((K, S), dtype=np.int64)
    for i, s, a in zip(*np.nonzero(alpha)):
        n = int(alpha[i, s, a])
        p = P[i, a, s]
        top = int(np.argmax(p))
        if p[top] == 1.0:
            nxt[i, top] += n
            continue
        nxt[i] += sample_multinomial(cell_rng(seed, 0, t, int(i), int(s), int(a)), n, p)
    return nxt


@dataclass
class SimulationRecord:
    seed: int
    states: np.ndarray       # (T, K, S) state at the start of each step
    actions: np.ndarray      # (T, K, S, A)
    rewards: np.ndarray      # (T,) undiscounted step rewards
    costs: np.ndarray        # (T,)
    total_reward: float      # discounted with gamma^(t-1)
    budget_flags: list[tuple[int, float]] = field(default_factory=list)
    infos: list[dict | None] = field(default_factory=list)
    final_state: np.ndarray | None = None

    @property
    def undiscounted_reward(self) -> float:
        return float(self.rewards.sum())

    def to_csv(self, inst: RmabInstance, header: str = "") -> str:
        buf = io.StringIO()
        buf.write(header)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "cluster", "state", "count", "action", "action_count", "reward", "cost"])
        T, K, S, A = self.actions.shape
        for t in range(T):
            R, C = inst.R(t + 1), inst.C(t + 1)
            for i in range(K):
                for s in range(S):
                    for a in range(A):
                        n = int(self.actions[t, i, s, a])
                        w.writerow([t + 1, i, s, int(self.states[t, i, s]), a, n,
                                    f"{R[i, s, a] * n:.12g}", f"{C[i, s, a] * n:.12g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"seed": self.seed, "horizon": int(len(self.rewards)),
                "total_discounted_reward": round(self.total_reward, 12),
                "total_undiscounted_reward": round(self.undiscounted_reward, 12),
                "budget_violations": len(self.budget_flags),
                "max_budget_excess": max((e for _, e in self.budget_flags), default=0.0)}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"


def simulate_trajectory(inst: RmabInstance, policy: Policy, start, seed: int,
                        keep_info: bool = True) -> SimulationRecord:
    mu = check_state_count(inst, start)
    T, K, S, A = inst.horizon, inst.num_clusters, inst.num_states, inst.num_actions
    states = np.zeros((T, K, S), dtype=np.int64)
    actions = np.zeros((T, K, S, A), dtype=np.int64)
    rewards = np.zeros(T)
    costs = np.zeros(T)
    flags, infos = [], []
    total = 0.0
    policy.reset(inst, mu)
    for t in range(1, T + 1):
        states[t - 1] = mu
        alpha = np.asarray(policy.act(inst, t, mu.copy(), cell_rng(seed, 1, t)))
        problems = check_action_count(inst, t, mu, alpha, budget_slack=math.inf)
        if problems:
            raise PolicyError(f"policy {policy.name!r} at t={t}: " + "; ".join(problems))
        alpha = alpha.astype(np.int64)
        actions[t - 1] = alpha
        rewards[t - 1] = step_reward(inst, t, alpha)
        costs[t - 1] = step_cost(inst, t, alpha)
        excess = costs[t - 1] - inst.budget(t)
        if excess > 1e-9:
            flags.append((t, float(excess)))
        total += inst.weight(t) * rewards[t - 1]
        if keep_info:
            infos.append(policy.step_info())
        mu = next_counts(inst, t, alpha, seed)
    return SimulationRecord(seed, states, actions, rewards, costs, total, flags, infos, mu)


@dataclass
class EvalSummary:
    policy: str
    replications: int
    mean: float
    sd: float
    ci_half_width: float
    mean_step_cost: float
    totals: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    budget_violations: int = 0
    max_budget_excess: float = 0.0

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - self.ci_half_width, self.mean + self.ci_half_width

    def row(self) -> dict:
        lo, hi = self.ci
        return {"policy": self.policy, "replications": self.replications,
                "mean": self.mean, "sd": self.sd, "ci_low": lo, "ci_high": hi,
                "ci_half_width": self.ci_half_width, "mean_step_cost": self.mean_step_cost,
                "budget_violations": self.budget_violations,
                "max_budget_excess": self.max_budget_excess}


def summarize(name: str, records: list[SimulationRecord]) -> EvalSummary:
    totals = np.array([r.total_reward for r in records])
    R = len(totals)
    sd = float(totals.std(ddof=1)) if R > 1 else 0.0
    flags = [e for r in records for _, e in r.budget_flags]
    return EvalSummary(
        policy=name, replications=R, mean=float(totals.mean()), sd=sd,
        ci_half_width=Z95 * sd / math.sqrt(R),
        mean_step_cost=float(np.mean([r.costs.mean() for r in records])),
        totals=totals, budget_violations=len(flags), max_budget_excess=max(flags, default=0.0))


def _run_chunk(args):
    inst, policy, start, seeds, keep_info = args
    return [simulate_trajectory(inst, policy, start, s, keep_info) for s in seeds]


def run_replications(inst: RmabInstance, policy: Policy, start, replications: int, base_seed: int = 0,
                     jobs: int = 1, keep_info: bool = True) -> list[SimulationRecord]:
    """Trajectories with seeds base_seed, ..., base_seed + R - 1 (in that order)."""
    if replications < 1:
        raise InstanceError("replications must be at least 1")
    seeds = [base_seed + r for r in range(replications)]
    if jobs <= 1 or replications == 1:
        return _run_chunk((inst, policy, start, seeds, keep_info))
    chunks = [seeds[k::jobs] for k in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        parts = list(ex.map(_run_chunk, [(inst, policy, start, c, keep_info) for c in chunks]))
    by_seed = {rec.seed: rec for part in parts for rec in part}
    return [by_seed[s] for s in seeds]


def evaluate_policy(inst: RmabInstance, policy: Policy, start, replications: int, base_seed: int = 0,
                    jobs: int = 1, name: str | None = None) -> EvalSummary:
    recs = run_replications(inst, policy, start, replications, base_seed, jobs, keep_info=False)
    return summarize(name or policy.name, recs)


# exact dynamic programming over count states ------------------------------------

def compositions(n: int, k: int):
    """All non-negative integer vectors of length k summing to n."""
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in compositions(n - first, k - 1):
            yield (first,) + rest


def count_state_space(inst: RmabInstance) -> int:
    S = inst.num_states
    return math.prod(math.comb(int(n) + S - 1, S - 1) for n in inst.cluster_sizes)


@lru_cache(maxsize=None)
def _multinomial_pmf(n: int, p: tuple[float, ...]) -> tuple[tuple[tuple[int, ...], float], ...]:
    out = []
    for x in compositions(n, len(p)):
        logc = math.lgamma(n + 1) - sum(math.lgamma(v + 1) for v in x)
        pr = math.exp(logc) * math.prod(pi ** v for pi, v in zip(p, x) if v)
        if any(v and pi == 0 for pi, v in zip(p, x)):
            pr = 0.0
        if pr > 0:
            out.append((x, pr))
    return tuple(out)


def _convolve(a: dict, b) -> dict:
    out: dict = {}
    for x, px in a.items():
        for y, py in b:
            z = tuple(u + v for u, v in zip(x, y))
            out[z] = out.get(z, 0.0) + px * py
    return out


def exact_optimal_value(inst: RmabInstance, start, state_cap: int = 200_000, horizon_cap: int = 8,
                        action_cap: int = 2_000_000) -> float:
    """Optimal expected discounted reward by backward induction over count states.

    Refuses (raises) when the count-state space, the horizon or the number of
    enumerated action counts exceeds its cap.
    """
    mu0 = check_state_count(inst, start)
    if inst.horizon > horizon_cap:
        raise InstanceError(f"horizon {inst.horizon} exceeds the exact-DP cap {horizon_cap}")
    size = count_state_space(inst)
    if size > state_cap:
        raise InstanceError(f"count-state space {size} exceeds the exact-DP cap {state_cap}")
    K, S, A, T = inst.num_clusters, inst.num_states, inst.num_actions, inst.horizon
    budget_tol = 1e-9
    work = [0]
    trans_cache: dict = {}
    memo: dict = {}

    def cluster_next(t, i, cells):
        # cells: tuple over (s, a) of counts for cluster i
        key = (0 if inst.stationary else t, i, cells)
        hit = trans_cache.get(key)
        if hit is not None:
            return hit
        P = inst.P(t)[i]
        dist = {(0,) * S: 1.0}
        for idx, n in enumerate(cells):
            if n:
                s, a = divmod(idx, A)
                dist = _convolve(dist, _multinomial_pmf(n, tuple(float(v) for v in P[a, s])))
        trans_cache[key] = dist
        return dist

    def value(t, state):
        if t > T:
            return 0.0
        key = (t, state)
        if key in memo:
            return memo[key]
        mu = np.array(state, dtype=np.int64).reshape(K, S)
        R, C, B = inst.R(t), inst.C(t), inst.budget(t)
        w = inst.weight(t)
        best = -math.inf
        flat = [(i, s) for i in range(K) for s in range(S)]
        splits = [list(compositions(int(mu[i, s]), A)) for i, s in flat]
        cost_of = [[float(np.dot(C[i, s], sp)) for sp in splits[k]] for k, (i, s) in enumerate(flat)]
        min_rest = np.zeros(len(flat) + 1)
        for k in range(len(flat) - 1, -1, -1):
            min_rest[k] = min_rest[k + 1] + min(cost_of[k])

        def dfs(k, used, chosen):
            nonlocal best
            if used + min_rest[k] > B + budget_tol:
                return
            if k == len(flat):
                work[0] += 1
                if work[0] > action_cap:
                    raise InstanceError(f"exact DP enumerated more than {action_cap} action counts")
                alpha = np.array(chosen, dtype=np.int64).reshape(K, S, A)
                val = w * float(np.sum(R * alpha))
                if t < T:
                    dists = [cluster_next(t, i, tuple(alpha[i].ravel().tolist())) for i in range(K)]
                    ev = 0.0
                    for combo in itertools.product(*(d.items() for d in dists)):
                        pr = math.prod(p for _, p in combo)
                        nxt = tuple(v for x, _ in combo for v in x)
                        ev += pr * value(t + 1, nxt)
                    val += ev
                best = max(best, val)
                return
            for sp, c in zip(splits[k], cost_of[k]):
                dfs(k + 1, used + c, chosen + list(sp))

        dfs(0, 0.0, [])
        memo[key] = best
        return best

    return value(1, tuple(mu0.ravel().tolist()))


# statistical checks --------------------------------------------------------------

@dataclass
class MultinomialCheck:
    k: int
    n: int
    delta: float
    trials: int
    epsilon: float
    failure_rate: float
    mean_l1: float
    sqrt_kn: float

    @property
    def passed(self) -> bool:
        return self.failure_rate <= self.delta and self.mean_l1 <= self.sqrt_kn


def check_multinomial_bound(k: int, n: int, family="uniform", delta: float = 0.1, trials: int = 2000,
                            seed: int = 0) -> MultinomialCheck:
    """Empirical tail and mean of ||sum_i (X_i - E X_i)||_1 for n categorical vectors.

    ``family``: "uniform", "degenerate", "dirichlet" (a fresh distribution
    per vector and trial) or an explicit probability vector.
    """
    if trials < 100:
        raise InstanceError("use at least 100 trials")
    rng = np.random.default_rng(seed)
    dev = np.zeros(trials)
    for r in range(trials):
        if isinstance(family, str) and family == "dirichlet":
            p = rng.dirichlet(np.ones(k), size=n)
            u = rng.random(n)
            cats = (u[:, None] > np.cumsum(p, axis=1)).sum(axis=1)
            cats = np.minimum(cats, k - 1)
            X = np.bincount(cats, minlength=k)
            dev[r] = np.abs(X - p.sum(axis=0)).sum()
            continue
        if isinstance(family, str):
            if family == "uniform":
                p = np.full(k, 1 / k)
            elif family == "degenerate":
                p = np.zeros(k)
                p[0] = 1.0
            else:
                raise InstanceError(f"unknown distribution family {family!r}")
        else:
            p = np.asarray(family, dtype=float)
            if p.size != k:
                raise InstanceError("probability vector must have k entries")
        X = rng.multinomial(n, p)
        dev[r] = np.abs(X - n * p).sum()
    eps = multinomial_eps(k, n, delta)
    return MultinomialCheck(k, n, delta, trials, eps, float(np.mean(dev >= eps)), float(dev.mean()),
                            math.sqrt(k * n))


@dataclass
class DriftReport:
    N: int
    delta: float
    replications: int
    gaps: np.ndarray = field(repr=False)
    mean_gap: float = 0.0
    quantile_gap: float = 0.0
    mean_bound: float = 0.0
    quantile_bound: float = 0.0
    budget_violations: int = 0

    @property
    def passed(self) -> bool:
        return self.mean_gap <= self.mean_bound and self.quantile_gap <= self.quantile_bound


def drift_gaps(records: list[SimulationRecord]) -> np.ndarray:
    """L1 gaps between each realized state and the previous step's fluid prediction."""
    out = []
    for rec in records:
        for t in range(1, len(rec.rewards)):
            info = rec.infos[t - 1]
            if info is None or info.get("predicted_next") is None:
                raise InstanceError("drift needs a policy that records its fluid predictions")
            out.append(float(np.abs(rec.states[t] - info["predicted_next"]).sum()))
    return np.array(out)


def check_drift_bound(inst: RmabInstance, start, replications: int, delta: float = 0.1,
                      base_seed: int = 0, policy: MfpPolicy | None = None, jobs: int = 1) -> DriftReport:
    policy = policy or MfpPolicy()
    recs = run_replications(inst, policy, start, replications, base_seed, jobs)
    gaps = drift_gaps(recs)
    N, K, S, A = inst.total_arms, inst.num_clusters, inst.num_states, inst.num_actions
    return DriftReport(
        N=N, delta=delta, replications=replications, gaps=gaps,
        mean_gap=float(gaps.mean()) if gaps.size else 0.0,
        quantile_gap=float(np.quantile(gaps, 1 - delta)) if gaps.size else 0.0,
        mean_bound=drift_mean_bound(N, K, S, A),
        quantile_bound=drift_quantile_bound(N, K, S, A, delta),
        budget_violations=sum(len(r.budget_flags) for r in recs))
