"""Scenario configuration: JSON schema, loading and policy construction."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .core import ROW_TOL, InstanceError, RmabInstance, default_zero_actions, validate_instance
from .examples import GENERATORS, RE, RS, GS, GE, D, GeneratorSpec
from .meanfield import ROUNDING_MODES, MfpPolicy, OneShotPolicy
from .policies import NobodyPolicy, Policy, PriorityPolicy, RandomPolicy
from .whittle import WhittleFinitePolicy, WhittlePolicy


class ConfigError(ValueError):
    """Invalid scenario configuration (reported with exit code 2)."""


POLICY_NAMES = ("mfp", "mfp-oneshot", "whittle", "whittle-finite", "random", "nobody",
                "alternate", "s7-priority", "reliable-first")

_num_array = {"type": ["array", "number"]}

INLINE_SCHEMA = {
    "type": "object",
    "required": ["transitions", "rewards", "costs", "budgets", "cluster_sizes", "horizon", "start"],
    "additionalProperties": False,
    "properties": {
        "transitions": {"type": "array", "description": "[t][i][a][s][s'] (one t slice when stationary)"},
        "rewards": {"type": "array", "description": "[t][i][s][a]"},
        "costs": {"type": "array", "description": "[t][i][s][a]"},
        "budgets": _num_array,
        "cluster_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "horizon": {"type": "integer", "minimum": 1},
        "discount": {"type": "number", "minimum": 0, "maximum": 1},
        "stationary": {"type": "boolean"},
        "zero_cost_action": _num_array,
        "start": {"type": "array", "description": "[i][s] arm counts"},
        "state_names": {"type": "array", "items": {"type": "string"}},
        "name": {"type": "string"},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rmab-mfp scenario",
    "type": "object",
    "required": ["instance"],
    "additionalProperties": False,
    "properties": {
        "instance": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "generator": {"type": "string", "enum": sorted(GENERATORS)},
                "params": {"type": "object"},
                "inline": INLINE_SCHEMA,
                "file": {"type": "string"},
            },
            "oneOf": [{"required": ["generator"]}, {"required": ["inline"]}, {"required": ["file"]}],
        },
        "policies": {"type": "array", "items": {"type": "string", "pattern": r"^(%s|priority:.+)$"
                                                 % "|".join(POLICY_NAMES)}, "minItems": 1},
        "replications": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "horizon": {"type": "integer", "minimum": 1},
        "discount": {"type": "number", "minimum": 0, "maximum": 1},
        "rounding": {"type": "string", "enum": list(ROUNDING_MODES)},
        "delta": {"type": ["number", "null"], "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "jobs": {"type": "integer", "minimum": 1},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "records": {"type": "boolean"},
                "bounds": {"type": "boolean"},
                "scan": {"type": "boolean"},
            },
        },
    },
}


@dataclass
class ScenarioConfig:
    instance: dict
    policies: list[str] = field(default_factory=lambda: ["mfp"])
    replications: int = 1
    seed: int = 0
    horizon: int | None = None
    discount: float | None = None
    rounding: str = "floor"
    delta: float | None = None
    jobs: int | None = None
    output: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def build_instance(self) -> tuple[RmabInstance, np.ndarray]:
        inst, start = build_instance(self.instance, self.base_dir)
        return apply_overrides(inst, self.horizon, self.discount), start


def validate_config(doc: dict) -> None:
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        lines = [f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid scenario config:\n  " + "\n  ".join(lines))


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    return config_from_dict(doc, path.parent)


def config_from_dict(doc: dict, base_dir=Path(".")) -> ScenarioConfig:
    validate_config(doc)
    kw = {k: v for k, v in doc.items() if k != "instance"}
    return ScenarioConfig(instance=doc["instance"], base_dir=Path(base_dir), **kw)


def _renormalize(P: np.ndarray) -> np.ndarray:
    rows = P.sum(axis=-1, keepdims=True)
    bad = np.abs(rows - 1.0) > ROW_TOL
    if bad.any():
        idx = tuple(int(v) for v in np.argwhere(bad[..., 0])[0])
        raise ConfigError(f"transitions{list(idx)} row sums to {rows[idx][0]:.12g}, "
                          f"beyond the 1e-9 tolerance")
    return P / rows


def instance_from_inline(doc: dict) -> tuple[RmabInstance, np.ndarray]:
    try:
        jsonschema.validate(doc, INLINE_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"inline instance {'/'.join(map(str, e.path))}: {e.message}") from None
    stationary = bool(doc.get("stationary", False))
    T = int(doc["horizon"])
    try:
        P = np.asarray(doc["transitions"], dtype=float)
        R = np.asarray(doc["rewards"], dtype=float)
        C = np.asarray(doc["costs"], dtype=float)
    except ValueError as e:
        raise ConfigError(f"inline instance arrays are ragged: {e}") from None
    if stationary:
        if P.ndim == 4:
            P, R, C = P[None], R[None], C[None]
    if P.ndim != 5:
        raise ConfigError("transitions must be indexed [t][i][a][s][s']")
    P = _renormalize(P)
    budgets = np.broadcast_to(np.asarray(doc["budgets"], dtype=float), (T,)).copy() \
        if np.ndim(doc["budgets"]) == 0 or len(doc["budgets"]) in (1, T) else None
    if budgets is None:
        raise ConfigError(f"budgets must be a number or a list of length horizon={T}")
    if "zero_cost_action" in doc:
        z = np.asarray(doc["zero_cost_action"], dtype=np.int64)
        z = np.broadcast_to(z, C.shape[:3]).copy() if z.ndim <= 1 else (z[None] if z.ndim == 2 else z)
    else:
        z = default_zero_actions(C)
    try:
        inst = RmabInstance(P, R, C, budgets, doc["cluster_sizes"], z, horizon=T,
                            discount=doc.get("discount", 1.0), stationary=stationary,
                            name=doc.get("name", "inline"),
                            state_names=tuple(doc["state_names"]) if "state_names" in doc else None)
    except InstanceError as e:
        raise ConfigError(f"inline instance: {e}") from None
    problems = validate_instance(inst)
    if problems:
        raise ConfigError("inline instance violates invariants:\n  " + "\n  ".join(problems[:20]))
    start = np.asarray(doc["start"], dtype=np.int64)
    return inst, start


def build_instance(spec: dict, base_dir=Path(".")) -> tuple[RmabInstance, np.ndarray]:
    if "generator" in spec:
        try:
            return GeneratorSpec(spec["generator"], dict(spec.get("params", {}))).build()
        except InstanceError as e:
            raise ConfigError(str(e)) from None
    if "inline" in spec:
        return instance_from_inline(spec["inline"])
    path = Path(base_dir) / spec["file"]
    try:
        return instance_from_inline(json.loads(path.read_text()))
    except FileNotFoundError:
        raise ConfigError(f"instance file {path} not found") from None


def apply_overrides(inst: RmabInstance, horizon=None, discount=None) -> RmabInstance:
    changes = {}
    if horizon is not None and horizon != inst.horizon:
        changes["horizon"] = int(horizon)
    if discount is not None and discount != inst.discount:
        changes["discount"] = float(discount)
    try:
        return inst.replace(**changes) if changes else inst
    except InstanceError as e:
        raise ConfigError(str(e)) from None


def instance_to_inline(inst: RmabInstance, start) -> dict:
    """Inverse of ``instance_from_inline`` (stationary shortcut kept)."""
    return {
        "name": inst.name,
        "stationary": inst.stationary,
        "horizon": inst.horizon,
        "discount": inst.discount,
        "transitions": inst.transitions.tolist(),
        "rewards": inst.rewards.tolist(),
        "costs": inst.costs.tolist(),
        "budgets": inst.budgets.tolist(),
        "cluster_sizes": inst.cluster_sizes.tolist(),
        "zero_cost_action": inst.zero_cost_action.tolist(),
        "start": np.asarray(start).tolist(),
        **({"state_names": list(inst.state_names)} if inst.state_names else {}),
    }


def _named_priority(name: str, inst: RmabInstance) -> list[tuple[int, int]]:
    if name == "alternate":
        if inst.num_clusters != 1 or inst.num_states < 5:
            raise ConfigError("'alternate' expects the five-state merged example")
        return [(0, RE), (0, RS), (0, GS), (0, D), (0, GE)]
    if name == "s7-priority":
        if inst.num_clusters != 1 or inst.num_states != 8:
            raise ConfigError("'s7-priority' expects the eight-state lower-bound example")
        return [(0, 6), (0, 7)]
    if name == "reliable-first":
        if inst.num_clusters != 2 or inst.num_states != 3:
            raise ConfigError("'reliable-first' expects the two-type three-state example")
        return [(0, 0), (0, 1)]
    cells = []
    for item in name.split(":", 1)[1].split(","):
        try:
            i, s = (int(v) for v in item.split("."))
        except ValueError:
            raise ConfigError(f"priority cell {item!r} must look like cluster.state") from None
        cells.append((i, s))
    return cells


def make_policy(name: str, inst: RmabInstance, rounding: str = "floor") -> Policy:
    if name == "mfp":
        return MfpPolicy(rounding=rounding)
    if name == "mfp-oneshot":
        return OneShotPolicy()
    if name == "whittle":
        return WhittlePolicy()
    if name == "whittle-finite":
        return WhittleFinitePolicy()
    if name == "random":
        return RandomPolicy()
    if name == "nobody":
        return NobodyPolicy()
    if name in ("alternate", "s7-priority", "reliable-first") or name.startswith("priority:"):
        return PriorityPolicy(_named_priority(name, inst), name=name)
    raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)} or priority:i.s,...")
