"""Policy protocol and simple baselines.

A policy maps (instance, t, realized state count, rng) to an integral action
count whose rows sum to the state count and whose cost fits the budget.
Policies may keep local state between calls of one trajectory; ``reset`` is
called at the start of every trajectory.
"""
from __future__ import annotations

import numpy as np

from .core import InstanceError, RmabInstance, all_passive


class Policy:
    name = "policy"
    randomized = False

    def reset(self, inst: RmabInstance, start: np.ndarray) -> None:
        pass

    def act(self, inst: RmabInstance, t: int, mu: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step_info(self) -> dict | None:
        """Diagnostics for the most recent ``act`` call (None when not tracked)."""
        return None


class NobodyPolicy(Policy):
    """Every arm gets its zero-cost action."""
    name = "nobody"

    def act(self, inst, t, mu, rng):
        return all_passive(inst, t, mu)


class RandomPolicy(Policy):
    """Visit arms in random order; each draws a uniform action, falling back
    to the zero-cost action when the draw no longer fits the budget."""
    name = "random"
    randomized = True

    def act(self, inst, t, mu, rng):
        K, S, A = inst.num_clusters, inst.num_states, inst.num_actions
        cells = np.repeat(np.arange(K * S), np.asarray(mu).ravel())
        rng.shuffle(cells)
        draws = rng.integers(0, A, size=cells.size)
        C = inst.C(t).reshape(K * S, A)
        zero = inst.zero_action(t).ravel()
        left = inst.budget(t)
        alpha = np.zeros((K * S, A), dtype=np.int64)
        for cell, a in zip(cells, draws):
            c = C[cell, a]
            if c <= left + 1e-12:
                left -= c
            else:
                a = zero[cell]
            alpha[cell, a] += 1
        return alpha.reshape(K, S, A)


def fill_by_priority(inst: RmabInstance, t: int, mu: np.ndarray, order, active: int = 1) -> np.ndarray:
    """Give ``active`` to whole cells in ``order`` until the budget runs out.

    ``order`` lists (cluster, state) cells.  The marginal cell receives
    floor(remaining / cost) active arms; everything else gets the zero-cost
    action.
    """
    alpha = all_passive(inst, t, mu)
    C = inst.C(t)
    z = inst.zero_action(t)
    left = inst.budget(t)
    for i, s in order:
        count = int(mu[i, s])
        if count == 0 or z[i, s] == active:
            continue
        c = C[i, s, active]
        take = count if c <= 0 else min(count, int(np.floor(left / c + 1e-9)))
        if take <= 0:
            continue
        alpha[i, s, z[i, s]] -= take
        alpha[i, s, active] += take
        left -= take * c
    return alpha


class PriorityPolicy(Policy):
    """Fixed state-priority index policy for two-action instances.

    ``order`` is a list of (cluster, state) pairs, highest priority first.
    Cells not listed never receive the active action.
    """

    def __init__(self, order, name: str = "priority"):
        self.order = [tuple(int(v) for v in cell) for cell in order]
        self.name = name

    def act(self, inst, t, mu, rng):
        if inst.num_actions != 2:
            raise InstanceError("priority policies need exactly two actions")
        return fill_by_priority(inst, t, np.asarray(mu), self.order)
