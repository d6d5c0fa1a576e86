"""Per-arm reward of Whittle vs the reliable-start-first priority policy on the merged example,
swept over the ergodicity parameter eta (eta_s = eta_r = eta_d), the discount and the horizon.

Published reference for eta = 0.01, gamma = 0.95: Whittle 3.04, priority at least 9.32.
"""
import argparse
import sys

from rmab_mfp.cli import csv_text
from rmab_mfp.config import make_policy
from rmab_mfp.examples import example3
from rmab_mfp.sim import run_replications, summarize

COLUMNS = ["sweep", "eta", "gamma", "horizon", "policy", "replications", "per_arm_mean", "per_arm_ci_half_width",
           "published"]
PUBLISHED = {(0.01, 0.95, "whittle"): 3.04, (0.01, 0.95, "alternate"): 9.32}


def measure(sweep, eta, gamma, T, n, reps, seed):
    kw = dict(eta_s=eta, eta_r=eta, eta_d=eta) if eta is not None else {}
    inst, start = example3(n=n, gamma=gamma, horizon=T, **kw)
    out = []
    for name in ("whittle-finite" if gamma == 1.0 else "whittle", "alternate"):
        s = summarize(name, run_replications(inst, make_policy(name, inst), start, reps, seed, keep_info=False))
        pub = PUBLISHED.get((eta, gamma, name)) if T == 200 else None
        out.append(dict(sweep=sweep, eta=eta if eta is not None else "default", gamma=gamma, horizon=T, policy=name,
                        replications=reps, per_arm_mean=s.mean / inst.total_arms,
                        per_arm_ci_half_width=s.ci_half_width / inst.total_arms, published=pub))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args(argv)
    rows = []
    for eta in (0.01, 0.02, 0.05, 0.1):
        rows += measure("eta", eta, 0.95, 200, a.n, a.reps, a.seed)
    for gamma in (0.5, 0.8, 0.9, 0.95, 0.99):
        rows += measure("gamma", None, gamma, 200 if gamma < 0.99 else 600, a.n, a.reps, a.seed)
    for T in (5, 10, 20, 40, 80):
        rows += measure("horizon", None, 1.0, T, a.n, a.reps, a.seed)
    sys.stdout.write(csv_text("scripts/mixing_sweeps.py", a.seed, COLUMNS, rows))


if __name__ == "__main__":
    main()
