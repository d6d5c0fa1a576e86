"""Command-line front end: scenario loading, experiment runs and CSV/JSON output.

Subcommands: solve, simulate, compare, index, bounds, reproduce, schema.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import LOG_NOTE, bound_reports
from .config import (SCHEMA, ConfigError, ScenarioConfig, apply_overrides, config_from_dict,
                     load_config, make_policy)
from .core import InstanceError
from .examples import EX1_STATES, EX2_STATES, GENERATORS, example1, example3
from .lp import LpFailure, mean_field_value
from .sim import PolicyError, run_replications, summarize
from .whittle import BracketError, average, compute_index_table, discounted, finite

log = logging.getLogger("rmab_mfp")

NORMALIZATION_NOTE = ("rewards are totals over all arms; per_arm columns divide by the arm count N, "
                      "the reading used when comparing with the published merged-example rewards")

INDEX_DIGITS = 8  # indices are bisected to 1e-8, so printed digits stop there

SUMMARY_COLUMNS = ["policy", "replications", "mean", "sd", "ci_low", "ci_high", "ci_half_width",
                   "per_arm_mean", "mean_step_cost", "budget_violations", "max_budget_excess",
                   "delta_vs_random"]

# published reference values -------------------------------------------------------

PUBLISHED_MERGED_REWARDS = [
    # (setting label, gamma, horizon, index policy, published whittle, published alternate lower bound)
    ("discounted gamma=0.95", 0.95, 200, "whittle", 7.33, 8.65),
    ("discounted gamma=0.8", 0.8, 60, "whittle", 1.17, 1.86),
    ("finite horizon T=20", 1.0, 20, "whittle-finite", 7.41, 9.11),
]

# (cluster, action, from, to) -> probability for the two-type engagement example
PUBLISHED_TWO_TYPE_TRANSITIONS = {
    ("reliable", 1, "start", "engaged"): 1.0,
    ("reliable", 1, "engaged", "engaged"): 1.0,
    ("reliable", 1, "dropout", "dropout"): 1.0,
    ("greedy", 1, "start", "engaged"): 1.0,
    ("greedy", 1, "engaged", "dropout"): 1.0,
    ("greedy", 1, "dropout", "dropout"): 1.0,
    **{(c, 0, s, "dropout"): 1.0 for c in ("reliable", "greedy") for s in EX1_STATES},
}


# formatting -----------------------------------------------------------------------

def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return "0" if v == 0 else f"{v:.10g}"
    return str(x)


def header_lines(command: str, seed: int | None) -> list[str]:
    return [f"rmab-mfp {__version__}", f"command: {command}",
            f"seed: {'' if seed is None else seed}", f"log: {LOG_NOTE}",
            f"normalization: {NORMALIZATION_NOTE}"]


def csv_text(command: str, seed, columns, rows) -> str:
    buf = io.StringIO()
    for line in header_lines(command, seed):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        values = [row.get(c) for c in columns] if isinstance(row, dict) else row
        w.writerow([fmt(v) for v in values])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(fmt(x))
    return x


def json_text(command: str, seed, payload: dict) -> str:
    doc = {"header": header_lines(command, seed), **payload}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


class Output:
    """Writes files under --out (serially); the primary table also goes to stdout."""

    def __init__(self, out_dir: str | None, stream=None):
        self.dir = Path(out_dir) if out_dir else None
        self.stream = stream or sys.stdout
        self.written: list[Path] = []

    def write(self, name: str, text: str, primary: bool = False) -> None:
        if self.dir is not None:
            path = self.dir / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
            self.written.append(path)
        if primary:
            self.stream.write(text)


# scenario assembly ----------------------------------------------------------------

def _parse_params(items) -> dict:
    params = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = v.strip()
    return params


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def scenario_from_args(args, default_policies=("mfp",)) -> ScenarioConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.example:
            raise ConfigError("give either --config or --example, not both")
    else:
        name = args.example or "example1"
        if name not in GENERATORS:
            raise ConfigError(f"unknown example {name!r}; choose from {sorted(GENERATORS)}")
        cfg = config_from_dict({"instance": {"generator": name, "params": {}}})
        cfg.policies = list(default_policies)
    spec = cfg.instance
    params = _parse_params(getattr(args, "param", None))
    if params:
        if "generator" not in spec:
            raise ConfigError("--param applies to generator instances only")
        spec["params"] = {**spec.get("params", {}), **params}
    # --gamma / --horizon feed the generator when it accepts them, else override the instance
    accepted = GENERATORS[spec["generator"]][1] if "generator" in spec else {}
    for flag, keys, attr in (("gamma", ("gamma",), "discount"), ("horizon", ("horizon", "T"), "horizon")):
        val = getattr(args, flag, None)
        if val is None:
            continue
        key = next((k for k in keys if k in accepted), None)
        if key is not None:
            spec.setdefault("params", {})[key] = val
        else:
            setattr(cfg, attr, val)
    if getattr(args, "policies", None):
        cfg.policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    for attr, flag in (("replications", "reps"), ("seed", "seed"), ("rounding", "rounding"),
                       ("jobs", "jobs"), ("delta", "delta")):
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, attr, val)
    if cfg.replications < 1:
        raise ConfigError("replications must be at least 1")
    if getattr(args, "out", None):
        cfg.output = {**cfg.output, "dir": args.out}
    if getattr(args, "records", False):
        cfg.output = {**cfg.output, "records": True}
    if getattr(args, "scan", False):
        cfg.output = {**cfg.output, "scan": True}
    return cfg


# experiment run -------------------------------------------------------------------

def run_experiment(cfg: ScenarioConfig, out: Output, command: str = "simulate") -> list[dict]:
    """Evaluate every configured policy and write the experiment bundle."""
    inst, start = cfg.build_instance()
    jobs = cfg.jobs or default_jobs()
    policies = [make_policy(name, inst, cfg.rounding) for name in cfg.policies]
    rows, totals = [], {}
    for name, pol in zip(cfg.policies, policies):
        log.info("evaluating %s with %d replications", name, cfg.replications)
        recs = run_replications(inst, pol, start, cfg.replications, cfg.seed, jobs, keep_info=False)
        s = summarize(name, recs)
        totals[name] = s.mean
        rows.append({**s.row(), "per_arm_mean": s.mean / inst.total_arms})
        if cfg.output.get("records"):
            for rec in recs:
                out.write(f"records/{name}/seed{rec.seed}.csv",
                          rec.to_csv(inst, "".join(f"# {h}\n" for h in header_lines(command, rec.seed))))
    if "random" in totals:
        for row in rows:
            row["delta_vs_random"] = row["mean"] - totals["random"]
    out.write("summary.csv", csv_text(command, cfg.seed, SUMMARY_COLUMNS, rows), primary=True)
    reports = bound_reports(inst, cfg.delta)
    out.write("bounds.csv", csv_text(command, cfg.seed, ["name", "value"],
                                     [{"name": r.name, "value": r.value} for r in reports]))
    if cfg.output.get("scan") and inst.num_actions == 2:
        mode = discounted(inst.discount) if inst.discount < 1 else average()
        table = compute_index_table(inst, mode, scan=True)
        for i, sc in enumerate(table.scans):
            out.write(f"scan_cluster{i}.csv", sc.to_csv(_hash_header(command, cfg.seed)))
    return rows


def _hash_header(command, seed) -> str:
    return "".join(f"# {h}\n" for h in header_lines(command, seed))


# subcommands ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = scenario_from_args(args, default_policies=("mfp",))
    run_experiment(cfg, Output(cfg.output.get("dir")), "simulate")
    return 0


def cmd_compare(args) -> int:
    cfg = scenario_from_args(args, default_policies=("mfp", "whittle", "random"))
    if len(cfg.policies) < 2:
        raise ConfigError("compare needs at least two policies")
    run_experiment(cfg, Output(cfg.output.get("dir")), "compare")
    return 0


def cmd_solve(args) -> int:
    cfg = scenario_from_args(args)
    inst, start = cfg.build_instance()
    value, plan = mean_field_value(inst, start, 1, method=args.method)
    out = Output(cfg.output.get("dir"))
    sol = plan.solution
    payload = {"instance": inst.name, "horizon": inst.horizon, "discount": inst.discount,
               "total_arms": inst.total_arms, "objective": value, "status": sol.status,
               "pivots": sol.pivots, "phase1_pivots": sol.phase1_pivots,
               "bland_pivots": sol.bland_pivots, "residual": sol.residual,
               "integrality_gap": plan.integrality_gap(), "method": args.method}
    out.write("solve.json", json_text("solve", cfg.seed, payload), primary=True)
    rows = []
    K, S, A = inst.num_clusters, inst.num_states, inst.num_actions
    for k in range(len(plan.mu)):
        for i in range(K):
            for s in range(S):
                for a in range(A):
                    rows.append([plan.t0 + k, i, s, plan.mu[k, i, s], a, plan.alpha[k, i, s, a]])
    out.write("plan.csv", csv_text("solve", cfg.seed, ["t", "cluster", "state", "mu", "action", "alpha"], rows))
    if args.dump_lp:
        from .lp import build_meanfield_lp
        out.write("fluid.lp", build_meanfield_lp(inst, start).lp.dump())
    return 0


def _index_mode(kind: str | None, inst):
    if kind is None:
        kind = "discounted" if inst.discount < 1 else "average"
    if kind == "discounted":
        if not inst.discount < 1:
            raise ConfigError("discounted indices need gamma < 1")
        return discounted(inst.discount)
    if kind == "average":
        return average()
    return finite(inst.horizon, inst.discount)


def index_rows(inst, table) -> list[dict]:
    rows = []
    K, S = table.values.shape
    for i in range(K):
        for s in range(S):
            rows.append({"cluster": (inst.cluster_names or range(K))[i] if inst.cluster_names else i,
                         "state": inst.state_names[s] if inst.state_names else s,
                         "index": round(float(table.values[i, s]), INDEX_DIGITS),
                         "verdict": table.verdicts[i][s] if table.verdicts else "",
                         "crossings": table.scans[i].crossings[s] if table.scans else ""})
    return rows


def cmd_index(args) -> int:
    cfg = scenario_from_args(args)
    inst, _ = cfg.build_instance()
    mode = _index_mode(args.mode, inst)
    table = compute_index_table(inst, mode, scan=args.scan)
    out = Output(cfg.output.get("dir"))
    out.write("index.csv", csv_text("index", cfg.seed, ["cluster", "state", "index", "verdict", "crossings"],
                                    index_rows(inst, table)), primary=True)
    for i, sc in enumerate(table.scans):
        out.write(f"scan_cluster{i}.csv", sc.to_csv(_hash_header("index", cfg.seed)))
    return 0


def cmd_bounds(args) -> int:
    cfg = scenario_from_args(args)
    inst, _ = cfg.build_instance()
    reports = bound_reports(inst, cfg.delta)
    out = Output(cfg.output.get("dir"))
    if args.format == "json":
        out.write("bounds.json", json_text("bounds", cfg.seed, {"bounds": [r.as_dict() for r in reports]}),
                  primary=True)
    else:
        rows = [{"name": r.name, "value": r.value, **{k: r.inputs.get(k) for k in ("N", "K", "S", "A", "T")},
                 "gamma": r.inputs.get("gamma"), "delta": r.inputs.get("delta")} for r in reports]
        out.write("bounds.csv", csv_text("bounds", cfg.seed,
                                         ["name", "value", "N", "K", "S", "A", "T", "gamma", "delta"], rows),
                  primary=True)
    return 0


def reproduce_transition_table(args, out: Output) -> None:
    inst, _ = example1(n=1)
    rows, worst = [], 0.0
    P = inst.P(1)
    for i, cname in enumerate(("reliable", "greedy")):
        for a in (1, 0):
            for s, sname in enumerate(EX1_STATES):
                for s2, s2name in enumerate(EX1_STATES):
                    ours = P[i, a, s, s2]
                    pub = PUBLISHED_TWO_TYPE_TRANSITIONS.get((cname, a, sname, s2name), 0.0)
                    worst = max(worst, abs(ours - pub))
                    rows.append([cname, a, sname, s2name, ours, pub, ours - pub])
    out.write("transitions.csv", csv_text("reproduce --table 2", args.seed,
                                          ["cluster", "action", "from", "to", "ours", "published", "deviation"],
                                          rows), primary=True)
    # implied closed-form indices for the same instance
    g, eps = args.gamma if args.gamma is not None else 0.9, 0.1
    inst_g, _ = example1(n=1, epsilon=eps, gamma=g)
    table = compute_index_table(inst_g, discounted(g))
    expect = [[g * (1 - eps), g * (1 - eps), 0.0], [g, 0.0, 0.0]]
    irows = [[c, EX1_STATES[s], round(float(table.values[i, s]), INDEX_DIGITS), expect[i][s], table.values[i, s] - expect[i][s]]
             for i, c in enumerate(("reliable", "greedy")) for s in range(3)]
    out.write("indices.csv", csv_text("reproduce --table 2", args.seed,
                                      ["cluster", "state", "ours", "closed_form", "deviation"], irows))
    log.info("largest transition deviation %.3g", worst)


def reproduce_merged_rewards(args, out: Output) -> None:
    n = args.n if args.n is not None else 100
    reps = args.reps if args.reps is not None else 20
    seed = args.seed if args.seed is not None else 0
    jobs = args.jobs or default_jobs()
    rows = []
    for label, gamma, T, index_policy, pub_w, pub_alt in PUBLISHED_MERGED_REWARDS:
        inst, start = example3(n=n, gamma=gamma, horizon=T)
        for name, pub, lower in ((index_policy, pub_w, False), ("alternate", pub_alt, True)):
            pol = make_policy(name, inst)
            recs = run_replications(inst, pol, start, reps, seed, jobs, keep_info=False)
            s = summarize(name, recs)
            N = inst.total_arms
            rows.append({"setting": label, "gamma": gamma, "horizon": T, "policy": name,
                         "replications": reps, "per_arm_mean": s.mean / N,
                         "per_arm_ci_half_width": s.ci_half_width / N, "published": pub,
                         "published_is_lower_bound": lower, "deviation": s.mean / N - pub,
                         "total_mean": s.mean, "budget_violations": s.budget_violations})
    cols = ["setting", "gamma", "horizon", "policy", "replications", "per_arm_mean", "per_arm_ci_half_width",
            "published", "published_is_lower_bound", "deviation", "total_mean", "budget_violations"]
    out.write("merged_rewards.csv", csv_text("reproduce --table 3", seed, cols, rows), primary=True)


def reproduce_scan_figure(args, out: Output) -> None:
    inst, _ = example3()
    table = compute_index_table(inst, average(), scan=True)
    sc = table.scans[0]
    rows = [{"state": EX2_STATES[s], "index": round(float(table.values[0, s]), INDEX_DIGITS), "verdict": sc.verdicts[s],
             "crossings": sc.crossings[s], "published_crossings": 1} for s in range(inst.num_states)]
    rs, gs = EX2_STATES.index("reliable_start"), EX2_STATES.index("greedy_start")
    rows.append({"state": "greedy_start_above_reliable_start",
                 "index": table.values[0, gs] - table.values[0, rs],
                 "verdict": str(bool(table.values[0, gs] > table.values[0, rs])).lower(),
                 "crossings": "", "published_crossings": ""})
    out.write("qgap_verdicts.csv", csv_text("reproduce --figure 4", args.seed,
                                            ["state", "index", "verdict", "crossings", "published_crossings"],
                                            rows))
    out.write("qgap_scan.csv", sc.to_csv(_hash_header("reproduce --figure 4", args.seed)), primary=True)


def cmd_reproduce(args) -> int:
    out = Output(args.out)
    if args.table == 2:
        reproduce_transition_table(args, out)
    elif args.table == 3:
        reproduce_merged_rewards(args, out)
    elif args.figure == 4:
        reproduce_scan_figure(args, out)
    else:
        raise ConfigError("reproduce needs --table {2,3} or --figure 4")
    return 0


def cmd_schema(args) -> int:
    sys.stdout.write(json.dumps(SCHEMA, indent=2, sort_keys=True) + "\n")
    return 0


# argument parsing -----------------------------------------------------------------

def _scenario_flags(p: argparse.ArgumentParser, sim: bool = False) -> None:
    p.add_argument("--config", help="scenario JSON file")
    p.add_argument("--example", help=f"generator name: {', '.join(sorted(GENERATORS))}")
    p.add_argument("--param", action="append", metavar="K=V", help="generator parameter (repeatable)")
    p.add_argument("--gamma", type=float, help="discount factor")
    p.add_argument("--horizon", type=int, help="horizon T")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--delta", type=float, help="confidence parameter for high-probability bounds")
    p.add_argument("--out", help="output directory")
    if sim:
        p.add_argument("--policies", help="comma-separated policy names")
        p.add_argument("--reps", type=int, help="replications")
        p.add_argument("--jobs", type=int, help="worker processes (default: available CPUs)")
        p.add_argument("--rounding", choices=["floor", "bucket"])
        p.add_argument("--records", action="store_true", help="write per-run trajectory CSVs")
        p.add_argument("--scan", action="store_true", help="write indexability curves")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rmab-mfp", description="Clustered restless bandit planning toolkit")
    ap.add_argument("--version", action="version", version=f"rmab-mfp {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the fluid LP from the start state")
    _scenario_flags(p)
    p.add_argument("--method", choices=["simplex", "bland", "highs"], default="simplex")
    p.add_argument("--dump-lp", action="store_true", help="also write the LP in text form")
    p.set_defaults(func=cmd_solve)

    for name, fn, text in (("simulate", cmd_simulate, "evaluate policies by simulation"),
                           ("compare", cmd_compare, "compare policies, reporting deltas against random")):
        p = sub.add_parser(name, help=text)
        _scenario_flags(p, sim=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("index", help="Whittle indices and indexability scans")
    _scenario_flags(p)
    p.add_argument("--mode", choices=["discounted", "average", "finite"])
    p.add_argument("--scan", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("bounds", help="closed-form gap, drift and truncation bounds")
    _scenario_flags(p)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("reproduce", help="regenerate a published table or figure with deviations")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--table", type=int, choices=[2, 3])
    grp.add_argument("--figure", type=int, choices=[4])
    p.add_argument("--reps", type=int)
    p.add_argument("--n", type=int, help="arms per type for the merged example")
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("schema", help="print the scenario JSON schema")
    p.set_defaults(func=cmd_schema)
    return ap


def _configure_logging() -> None:
    level = os.environ.get("RMAB_MFP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LpFailure, BracketError, PolicyError, FloatingPointError) as e:
        print(f"rmab-mfp: numerical failure: {e}", file=sys.stderr)
        return 3
    except (ConfigError, InstanceError) as e:
        print(f"rmab-mfp: configuration error: {e}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # stdout closed early (e.g. piped into head); files under --out are complete
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
