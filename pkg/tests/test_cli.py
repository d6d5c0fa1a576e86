import csv
import io
import json
import os
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from rmab_mfp import __version__, cli
from rmab_mfp.config import SCHEMA, ConfigError, config_from_dict, instance_from_inline, instance_to_inline
from rmab_mfp.examples import example1
from rmab_mfp.lp import LpFailure

SCENARIOS = Path(__file__).resolve().parents[1] / "scripts" / "scenarios"


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def test_index_table_for_engagement_example(capsys):
    code, out, _ = run(["index", "--example", "example1", "--gamma", "0.9"], capsys)
    assert code == 0
    values = {row["index"] for row in table(out)}
    assert {"0.9", "0.81", "0"} == values


def test_solve_zero_reward_inline_instance(tmp_path, capsys):
    inst, start = example1(n=2, horizon=4)
    doc = instance_to_inline(inst.replace(rewards=np.zeros_like(inst.rewards)), start)
    path = tmp_path / "zero.json"
    path.write_text(json.dumps({"instance": {"inline": doc}}))
    code, out, _ = run(["solve", "--config", str(path), "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    assert json.loads(out)["objective"] == 0
    assert (tmp_path / "o" / "plan.csv").exists()


def test_inline_round_trip_matches_generator():
    inst, start = example1(n=3, horizon=5)
    back, back_start = instance_from_inline(json.loads(json.dumps(instance_to_inline(inst, start))))
    assert np.array_equal(back.transitions, inst.transitions) and np.array_equal(back_start, start)


def test_scan_figure_has_one_sign_change_per_state(tmp_path, capsys):
    code, out, _ = run(["reproduce", "--figure", "4", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = table(out)
    by_state = {}
    for row in rows:
        by_state.setdefault(row["state"], []).append(float(row["q_gap"]) > 1e-9)
    assert len(by_state) == 5
    for signs in by_state.values():
        assert sum(a != b for a, b in zip(signs, signs[1:])) == 1
    verdicts = table((tmp_path / "qgap_verdicts.csv").read_text())
    assert verdicts[-1]["verdict"] == "true"


def test_transition_table_reproduction_has_zero_deviation(capsys):
    code, out, _ = run(["reproduce", "--table", "2"], capsys)
    assert code == 0
    assert all(float(r["deviation"]) == 0 for r in table(out))


def test_compare_engagement_example(tmp_path, capsys):
    code, out, _ = run(["compare", "--example", "example1", "--param", "n=10", "--policies",
                        "mfp,whittle,random", "--reps", "5", "--jobs", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = {r["policy"]: r for r in table(out)}
    assert float(rows["mfp"]["mean"]) > float(rows["whittle"]["mean"])
    assert float(rows["random"]["delta_vs_random"]) == 0
    assert float(rows["mfp"]["delta_vs_random"]) == pytest.approx(
        float(rows["mfp"]["mean"]) - float(rows["random"]["mean"]), rel=1e-8)
    assert (tmp_path / "bounds.csv").exists()


def test_single_replication_summary(capsys):
    code, out, _ = run(["simulate", "--example", "example1", "--policies", "whittle", "--reps", "1"], capsys)
    rows = table(out)
    assert code == 0 and len(rows) == 1 and float(rows[0]["sd"]) == 0


def test_merged_example_scenario_file(tmp_path, capsys):
    code, out, _ = run(["compare", "--config", str(SCENARIOS / "merged_discounted_095.json"), "--reps", "4",
                        "--jobs", "1", "--out", str(tmp_path)], capsys)
    rows = {r["policy"]: r for r in table(out)}
    assert code == 0
    assert float(rows["alternate"]["mean"]) > float(rows["whittle"]["mean"])


def test_outputs_are_byte_identical(tmp_path, capsys):
    dirs = []
    for k, jobs in enumerate(("1", "2", "1")):
        d = tmp_path / f"run{k}"
        run(["compare", "--config", str(SCENARIOS / "inline_two_state.json"), "--reps", "12", "--jobs", jobs,
             "--records", "--out", str(d)], capsys)
        dirs.append(d)
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*.csv"))
    assert len(files) > 10
    for rel in files:
        blobs = {(d / rel).read_bytes() for d in dirs}
        assert len(blobs) == 1, rel


def test_every_output_file_has_header_block(tmp_path, capsys):
    run(["compare", "--example", "example1", "--reps", "2", "--jobs", "1", "--records", "--scan",
         "--seed", "5", "--out", str(tmp_path)], capsys)
    run(["solve", "--example", "example1", "--out", str(tmp_path / "solve")], capsys)
    files = list(tmp_path.rglob("*.csv")) + list(tmp_path.rglob("*.json"))
    assert len(files) > 5
    for path in files:
        text = path.read_text()
        head = json.loads(text)["header"] if path.suffix == ".json" else \
            [line[2:] for line in text.splitlines() if line.startswith("# ")]
        assert head[0] == f"rmab-mfp {__version__}", path
        assert any(h.startswith("seed: ") for h in head)
        assert any("natural logarithm" in h for h in head)
        assert any(h.startswith("normalization:") for h in head)


def test_config_errors_exit_with_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"instance": {"generator": "example1"}, "replications": 0, "extra": 1}))
    code, _, err = run(["simulate", "--config", str(bad)], capsys)
    assert code == 2 and "replications" in err and "extra" in err
    code, _, err = run(["simulate", "--example", "example1", "--policies", "mfp,telepathy"], capsys)
    assert code == 2 and "telepathy" in err
    code, _, _ = run(["simulate", "--config", str(tmp_path / "missing.json")], capsys)
    assert code == 2
    code, _, err = run(["simulate", "--example", "example1", "--param", "n"], capsys)
    assert code == 2 and "key=value" in err


def test_row_sums_renormalize_within_tolerance_and_fail_beyond(tmp_path, capsys):
    doc = json.loads((SCENARIOS / "inline_two_state.json").read_text())
    rows = doc["instance"]["inline"]["transitions"]
    rows[0][0][0] = [0.9, 0.1 + 5e-10]
    (tmp_path / "near.json").write_text(json.dumps(doc))
    assert run(["solve", "--config", str(tmp_path / "near.json")], capsys)[0] == 0
    rows[0][0][0] = [0.9, 0.2]
    (tmp_path / "far.json").write_text(json.dumps(doc))
    code, _, err = run(["solve", "--config", str(tmp_path / "far.json")], capsys)
    assert code == 2 and "1.1" in err


def test_numerical_failure_exits_with_three(monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise LpFailure("forced")
    monkeypatch.setattr(cli, "mean_field_value", boom)
    code, _, err = run(["solve", "--example", "example1"], capsys)
    assert code == 3 and "numerical failure" in err


def test_unknown_subcommand_and_flag_are_rejected(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["simulate", "--turbo"])
    assert e.value.code == 2


def test_schema_is_published_and_matches_shipped_scenarios(capsys):
    code, out, _ = run(["schema"], capsys)
    assert code == 0 and json.loads(out) == json.loads(json.dumps(SCHEMA))
    for path in SCENARIOS.glob("*.json"):
        jsonschema.validate(json.loads(path.read_text()), SCHEMA)
        config_from_dict(json.loads(path.read_text()))
    with pytest.raises(ConfigError):
        config_from_dict({"instance": {"generator": "example1"}, "policies": []})


def test_bounds_subcommand_formats(capsys):
    code, out, _ = run(["bounds", "--example", "example1", "--delta", "0.1"], capsys)
    assert code == 0 and {r["name"] for r in table(out)} >= {"finite_horizon_gap", "drift_quantile"}
    code, out, _ = run(["bounds", "--example", "lowerbound", "--format", "json"], capsys)
    assert code == 0 and json.loads(out)["bounds"][0]["name"] == "finite_horizon_gap"


def test_log_level_environment_variable():
    env = {**os.environ, "RMAB_MFP_LOG": "INFO"}
    proc = subprocess.run([sys.executable, "-m", "rmab_mfp", "simulate", "--example", "example1", "--reps", "1",
                           "--jobs", "1"], capture_output=True, text=True, env=env, check=True)
    assert "INFO rmab_mfp: evaluating mfp" in proc.stderr
    quiet = subprocess.run([sys.executable, "-m", "rmab_mfp", "simulate", "--example", "example1", "--reps", "1",
                            "--jobs", "1"], capture_output=True, text=True, check=True)
    assert quiet.stderr == ""
