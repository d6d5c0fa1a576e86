"""Shortfall of the fluid planner on the eight-state lower-bound instance as n grows."""
import argparse
import math
import sys

import numpy as np

from rmab_mfp.bounds import lowerbound_gap
from rmab_mfp.cli import csv_text
from rmab_mfp.examples import lowerbound_example
from rmab_mfp.meanfield import MfpPolicy
from rmab_mfp.policies import PriorityPolicy
from rmab_mfp.sim import run_replications, summarize

COLUMNS = ["n", "T", "delta", "replications", "priority_reward", "mfp_mean", "mfp_ci_half_width",
           "shortfall", "shortfall_bound", "shortfall_over_sqrt_n", "s6_mean", "s6_bound", "budget_violations"]


def row(n, T, delta, reps, seed):
    inst, start = lowerbound_example(n=n, T=T, delta=delta)
    mfp = run_replications(inst, MfpPolicy(), start, reps, seed, keep_info=False)
    best = run_replications(inst, PriorityPolicy([(0, 6), (0, 7)]), start, 1, seed, keep_info=False)[0]
    s = summarize("mfp", mfp)
    shortfall = best.total_reward - s.mean
    return dict(n=n, T=T, delta=delta, replications=reps, priority_reward=best.total_reward, mfp_mean=s.mean,
                mfp_ci_half_width=s.ci_half_width, shortfall=shortfall, shortfall_bound=lowerbound_gap(n, T, delta),
                shortfall_over_sqrt_n=shortfall / math.sqrt(n),
                s6_mean=float(np.mean([r.states[3, 0, 5] for r in mfp])),
                s6_bound=n - math.sqrt(n / (6 * math.pi)),
                budget_violations=sum(len(r.budget_flags) for r in mfp))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, nargs="+", default=[150, 600, 2400])
    p.add_argument("--T", type=int, default=13)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args(argv)
    rows = [row(n, a.T, a.delta, a.reps, a.seed) for n in a.n]
    sys.stdout.write(csv_text("scripts/lowerbound_example.py", a.seed, COLUMNS, rows))


if __name__ == "__main__":
    main()
