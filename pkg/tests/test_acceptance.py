"""Acceptance criteria 1-11, one test each.

Every test prints a single ``CRITERION n: PASS|FAIL | details`` line (also
collected into the pytest terminal summary).  Run directly with
``python tests/test_acceptance.py`` to get only those lines.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

import conftest
from rmab_mfp.bounds import drift_mean_bound, drift_quantile_bound, lowerbound_gap, truncation_rule
from rmab_mfp.config import make_policy
from rmab_mfp.examples import GS, RS, example1, example3, lowerbound_example, synthetic_clustered, tiny_instance
from rmab_mfp.lp import mean_field_value
from rmab_mfp.meanfield import MfpPolicy, evaluation_horizon, mfp_step, round_counts
from rmab_mfp.policies import PriorityPolicy
from rmab_mfp.sim import (check_drift_bound, check_multinomial_bound, exact_optimal_value, run_replications,
                          summarize)
from rmab_mfp.whittle import WhittlePolicy, average, compute_index_table, discounted

ROOT = Path(__file__).resolve().parents[1]
FLOOR_BUDGET_FLAGS: dict[str, int] = {}  # floor-rounding runs made by the other criteria


def report(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    conftest.ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def flags(records) -> int:
    return sum(len(r.budget_flags) for r in records)


def test_criterion_01_whittle_closed_forms():
    t0 = time.perf_counter()
    worst = 0.0
    for gamma in (0.5, 0.8, 0.9, 0.99):
        for eps in (0.01, 0.1, 0.5):
            inst, _ = example1(n=1, epsilon=eps, gamma=gamma)
            got = compute_index_table(inst, discounted(gamma)).values
            expect = np.array([[gamma * (1 - eps), gamma * (1 - eps), 0.0], [gamma, 0.0, 0.0]])
            worst = max(worst, float(np.abs(got - expect).max()))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-6 and elapsed < 1.0,
           f"12 parameter pairs, worst index error {worst:.2e} (tol 1e-6), {elapsed:.2f}s (limit 1s)")


def test_criterion_02_whittle_ratio():
    n, g, eps, reps = 20, 0.9, 0.1, 200
    base, start = example1(n=n, epsilon=eps, gamma=g)
    T_rule = truncation_rule(base.total_arms, base.num_clusters, base.num_states)
    T = evaluation_horizon(base, rel_tail=1e-3)
    inst = base.replace(horizon=T)
    w = run_replications(inst, WhittlePolicy(), start, reps, 0, keep_info=False)
    o = run_replications(inst, PriorityPolicy([(0, 0), (0, 1)], "reliable-first"), start, reps, 0,
                         keep_info=False)
    FLOOR_BUDGET_FLAGS["criterion 2"] = flags(w) + flags(o)
    sw, so = summarize("whittle", w), summarize("reliable-first", o)
    opt_expect = n * g * (1 - eps) / (1 - g) * (1 - g ** (T - 1))
    tail = n * g * (1 - eps) / (1 - g) * g ** (T - 1)
    target = (1 - eps) / (1 - g)
    ratio = so.mean / sw.mean
    ok = (abs(sw.mean - n * g) <= 1e-9 and abs(so.mean - opt_expect) <= max(tail, 1e-9)
          and abs(ratio / target - 1) <= 0.02)
    short = (1 - g ** (T_rule - 1))
    report(2, ok, f"T={T} (rule minimum {T_rule}, lengthened so gamma^(T-1)<=1e-3); whittle mean {sw.mean:.9f} "
                  f"vs n*gamma {n * g}; priority mean {so.mean:.6f} vs {opt_expect:.6f} (tail {tail:.4f}); "
                  f"ratio {ratio:.4f} vs {target:.4f} ({100 * abs(ratio / target - 1):.2f}% off, limit 2%); "
                  f"at T={T_rule} the ratio would be {target * short:.3f}")


def test_criterion_03_fluid_upper_bound():
    t0 = time.perf_counter()
    violations, worst = 0, -math.inf
    for seed in range(50):
        inst, start = tiny_instance(seed)
        exact = exact_optimal_value(inst, start)
        fluid, _ = mean_field_value(inst, start)
        worst = max(worst, exact - fluid)
        violations += exact > fluid + 1e-6
    elapsed = time.perf_counter() - t0
    report(3, violations == 0 and elapsed < 120,
           f"50 tiny instances, {violations} violations, max(exact - fluid) = {worst:.2e}, {elapsed:.1f}s")


def test_criterion_04_lipschitz():
    rng = np.random.default_rng(2024)
    violations, checked, worst_ratio = 0, 0, 0.0
    for seed in range(50):
        inst, _ = tiny_instance(seed)
        S = inst.num_states
        for _ in range(100):
            a = np.stack([rng.multinomial(int(m), rng.dirichlet(np.ones(S))) for m in inst.cluster_sizes])
            b = np.stack([rng.multinomial(int(m), rng.dirichlet(np.ones(S))) for m in inst.cluster_sizes])
            t0 = int(rng.integers(1, inst.horizon + 1))
            l1 = float(np.abs(a - b).sum())
            bound = (inst.horizon - t0 + 1) * inst.r_max * l1 / 2
            gap = abs(mean_field_value(inst, a, t0)[0] - mean_field_value(inst, b, t0)[0])
            checked += 1
            violations += gap > bound + 1e-7
            if bound > 0:
                worst_ratio = max(worst_ratio, gap / bound)
    report(4, violations == 0, f"{checked} start-state pairs on 50 tiny instances, {violations} violations, "
                               f"largest |dV|/bound = {worst_ratio:.3f}")


def test_criterion_05_rounding_slack():
    worst, cases = 0.0, []
    ok = True
    total_flags = 0
    for K, S, A in ((1, 3, 2), (2, 3, 2), (4, 3, 2), (4, 2, 3)):
        inst, start = synthetic_clustered(K=K, num_states=S, num_actions=A, N=1000, T=5, seed=K + A)
        recs = run_replications(inst, MfpPolicy(), start, 20, 0)
        total_flags += flags(recs)
        limit = inst.horizon * K * S * A * inst.r_max
        for rec in recs:
            fluid = sum(inst.weight(t + 1) * info["fluid_reward"] for t, info in enumerate(rec.infos))
            dev = abs(rec.total_reward - fluid)
            worst = max(worst, dev / limit)
            ok &= dev <= limit
        cases.append(f"K={K},S={S},A={A}")
    FLOOR_BUDGET_FLAGS["criterion 5"] = total_flags
    report(5, bool(ok), f"N=1000 MFP runs on {', '.join(cases)} (20 each); largest "
                        f"|realized - fluid| / (T K S A R_max) = {worst:.4f}")


def test_criterion_06_drift_scaling():
    Ns = (100, 400, 1600)
    means, parts, ok = [], [], True
    total_flags = 0
    for N in Ns:
        inst, start = synthetic_clustered(K=1, num_states=2, num_actions=2, N=N, T=4, seed=0)
        rep = check_drift_bound(inst, start, 500, delta=0.1)
        total_flags += rep.budget_violations
        means.append(rep.mean_gap)
        ok &= rep.mean_gap <= drift_mean_bound(N, 1, 2, 2)
        ok &= rep.quantile_gap <= drift_quantile_bound(N, 1, 2, 2, 0.1)
        parts.append(f"N={N}: mean {rep.mean_gap:.2f} <= {rep.mean_bound:.2f}")
    slope = float(np.polyfit(np.log(Ns), np.log(means), 1)[0])
    ok &= abs(slope - 0.5) <= 0.1
    FLOOR_BUDGET_FLAGS["criterion 6"] = total_flags
    report(6, bool(ok), "; ".join(parts) + f"; log-log slope {slope:.3f} (target 0.5 +- 0.1), 500 reps each")


def test_criterion_07_concentration():
    parts, ok = [], True
    for k, n, delta in ((2, 100, 0.1), (4, 400, 0.05)):
        res = check_multinomial_bound(k, n, "uniform", delta=delta, trials=2000, seed=k)
        ok &= res.passed
        parts.append(f"(k={k}, n={n}, delta={delta}): failure rate {res.failure_rate:.4f}, "
                     f"mean L1 {res.mean_l1:.2f} <= sqrt(kn) {res.sqrt_kn:.2f}, eps {res.epsilon:.2f}")
    report(7, bool(ok), "; ".join(parts))


def test_criterion_08_lower_bound():
    n, T, delta, reps = 600, 13, 1.0, 500
    t0 = time.perf_counter()
    inst, start = lowerbound_example(n=n, T=T, delta=delta)
    mfp = run_replications(inst, MfpPolicy(), start, reps, 0, keep_info=False)
    alt = run_replications(inst, PriorityPolicy([(0, 6), (0, 7)], "s7-priority"), start, 1, 0, keep_info=False)
    FLOOR_BUDGET_FLAGS["criterion 8"] = flags(mfp) + flags(alt)
    sm = summarize("mfp", mfp)
    shortfall = alt[0].total_reward - sm.mean
    bound = lowerbound_gap(n, T, delta)
    reached = np.array([r.states[3, 0, 5] for r in mfp], dtype=float)  # arms in s6 at t = 4
    z_mean = reached.mean()
    z_ci = 1.96 * reached.std(ddof=1) / math.sqrt(reps)
    z_bound = n - math.sqrt(n / (6 * math.pi))
    elapsed = time.perf_counter() - t0
    ok = (shortfall + sm.ci_half_width >= bound and z_mean - z_ci <= z_bound and elapsed < 300)
    report(8, ok, f"priority reward {alt[0].total_reward:.2f}, MFP mean {sm.mean:.2f} +- {sm.ci_half_width:.2f}; "
                  f"shortfall {shortfall:.2f} vs bound {bound:.2f}; arms reaching s6 {z_mean:.2f} +- {z_ci:.2f} "
                  f"vs bound {z_bound:.2f}; {elapsed:.1f}s")


def test_criterion_09_budget_safety():
    floor = dict(FLOOR_BUDGET_FLAGS)
    if not floor:  # run in isolation: make a floor pass of our own
        inst, start = synthetic_clustered(K=2, N=1000, T=5, seed=3)
        floor["standalone"] = flags(run_replications(inst, MfpPolicy(), start, 20, 0, keep_info=False))
    parts, ok, fractional = [], sum(floor.values()) == 0, 0
    for K, S, A in ((2, 3, 2), (4, 2, 3)):
        inst, start = synthetic_clustered(K=K, num_states=S, num_actions=A, N=1000, T=5, seed=11)
        reps = 200
        recs = run_replications(inst, MfpPolicy(rounding="bucket"), start, reps, 0)
        excess = [e for r in recs for _, e in r.budget_flags]
        cap = K * S * A * inst.c_max
        ok &= all(e <= cap + 1e-9 for e in excess)
        head = (f"bucket K={K},S={S},A={A}: {len(excess)} flagged steps over {reps} runs, max excess "
                f"{max(excess, default=0):.0f} <= {cap:.0f}")
        # unbiasedness at the first realized state whose current-step plan is fractional
        hit = next(((r, t) for r in recs for t, info in enumerate(r.infos, 1) if info["integrality_gap"] > 0.05),
                   None)
        if hit is None:
            parts.append(head + "; every realized plan integral")
            continue
        rec, t = hit
        mu = rec.states[t - 1]
        plan = mean_field_value(inst, mu, t)[1]
        x = plan.alpha_at(t)
        draws = 2000
        played = np.array([mfp_step(inst, t, mu, rounding="bucket", rng=np.random.default_rng(k), plan=plan)[0]
                           for k in range(draws)], dtype=float)
        se = played.std(axis=0, ddof=1) / math.sqrt(draws)
        z = np.abs(played.mean(axis=0) - x)
        ok &= bool(np.all(z <= 4 * se + 1e-9))
        fractional += 1
        worst_z = float(np.max(np.where(se > 0, z / np.where(se > 0, se, 1), 0)))
        parts.append(head + f"; at t={t} (plan fractional by {float(np.abs(x - np.round(x)).max()):.2f}) "
                            f"max |mean - plan| / se {worst_z:.2f} over {draws} draws (limit 4)")
    ok &= fractional > 0
    report(9, bool(ok), f"floor-rounding violations {sum(floor.values())} over {sorted(floor)}; " + "; ".join(parts))


MERGED_SETTINGS = (("gamma=0.95", 0.95, 200, "whittle", 7.33, 8.65),
                   ("gamma=0.8", 0.8, 60, "whittle", 1.17, 1.86),
                   ("T=20", 1.0, 20, "whittle-finite", 7.41, 9.11))


def test_criterion_10_merged_example():
    inst, _ = example3()
    table = compute_index_table(inst, average(), scan=True)
    scan_ok = table.scans[0].crossings == [1] * 5 and table.values[0, GS] > table.values[0, RS]
    parts, order_ok = [], True
    for label, gamma, T, index_policy, pub_w, pub_alt in MERGED_SETTINGS:
        inst, start = example3(n=100, gamma=gamma, horizon=T)
        per_arm = {}
        for name in (index_policy, "alternate"):
            recs = run_replications(inst, make_policy(name, inst), start, 20, 0, keep_info=False)
            per_arm[name] = summarize(name, recs).mean / inst.total_arms
        order_ok &= per_arm["alternate"] > per_arm[index_policy]
        parts.append(f"{label}: whittle {per_arm[index_policy]:.2f} (published {pub_w}), "
                     f"alternate {per_arm['alternate']:.2f} (published >= {pub_alt})")
    report(10, bool(scan_ok and order_ok),
           f"scan crossings {table.scans[0].crossings}, index(gs) {table.values[0, GS]:.4f} > index(rs) "
           f"{table.values[0, RS]:.4f}; per-arm rewards, reported only: " + "; ".join(parts))


def test_criterion_11_determinism(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        subprocess.run([sys.executable, "-m", "rmab_mfp", "compare", "--config",
                        str(ROOT / "scripts" / "scenarios" / "two_type_engagement.json"), "--reps", "10",
                        "--records", "--scan", "--out", str(d)], check=True, capture_output=True)
        subprocess.run([sys.executable, "-m", "rmab_mfp", "simulate", "--example", "synthetic", "--param", "N=400",
                        "--param", "K=1", "--param", "num_states=2", "--param", "T=4", "--policies",
                        "mfp,random", "--reps", "25", "--records", "--out", str(d / "synthetic")],
                       check=True, capture_output=True)
        outs.append(d)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    inst, start = synthetic_clustered(K=2, N=200, T=4, seed=9)
    a = run_replications(inst, MfpPolicy(rounding="bucket"), start, 5, 3)
    b = run_replications(inst, MfpPolicy(rounding="bucket"), start, 5, 3)
    same_records = all(x.to_csv(inst) == y.to_csv(inst) for x, y in zip(a, b))
    report(11, same and same_records and len(files) > 50,
           f"{len(files)} CSV files from two CLI runs byte-identical: {same}; in-process bucket records "
           f"identical: {same_records}")


if __name__ == "__main__":
    import pytest
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
