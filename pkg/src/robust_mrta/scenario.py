"""Scenario files: YAML documents validated against a JSON schema.

Units used throughout a scenario file:

- positions, goals, region bounds, look-ahead distance, sweep spacing: m
- headings: rad
- dt: s
- v_max, sweep speed: m/s; w_max: rad/s
- disturbance gain: m/s (added to the forward-speed input)
- GP signal_std, noise_std, d_max: m/s or rad/s (state-derivative units)
- GP lengthscale: units of the feature vector (m for positions, unitless for cos/sin)
- team weights (coupling, slack_weight, kappa, gamma0, delta_max) and beta1: unitless
"""

from __future__ import annotations

import os
from dataclasses import replace
from typing import Any, Optional

import jsonschema
import numpy as np
import yaml

from .allocator import TeamConfig
from .barrier import BarrierTask
from .dynamics import GroundTruthDisturbance, SingleIntegratorModel, UnicycleModel
from .errors import InvalidArgument, ScenarioError
from .gp import DisturbanceEstimateConfig, KernelParams
from .simulator import RobotSpec, Scenario, SweepConfig

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_BOX = {
    "type": "object",
    "additionalProperties": False,
    "required": ["x_min", "x_max", "y_min", "y_max"],
    "properties": {k: _NUM for k in ("x_min", "x_max", "y_min", "y_max")},
}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "arena", "robots", "tasks"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "arena": _BOX,
        "dt": _POS,
        "steps": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "beta1": _POS,
        "tracked_robot": {"type": "integer", "minimum": 0},
        "team": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "coupling": _POS,
                "slack_weight": _POS,
                "kappa": {"type": "number", "exclusiveMinimum": 1},
                "gamma0": _POS,
                "delta_max": _POS,
                "pi_star": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "strategy": {"enum": ["enumerate", "bnb"]},
            },
        },
        "robots": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "kind", "model", "initial_state"],
                "properties": {
                    "name": {"type": "string"},
                    "kind": {"type": "string"},
                    "model": {"enum": ["unicycle", "single_integrator"]},
                    "lookahead": _POS,
                    "v_max": _POS,
                    "w_max": _POS,
                    "initial_state": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 3},
                    "initial_specialization": {
                        "type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                },
            },
        },
        "tasks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["goal"],
                "properties": {"name": {"type": "string"}, "goal": _PAIR},
            },
        },
        "disturbances": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["region", "gain"],
                "properties": {
                    "region": _BOX,
                    "gain": _NUM,
                    "affected_kinds": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "gp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "signal_std": _POS,
                "lengthscale": _POS,
                "noise_std": {"type": "number", "minimum": 0},
                "k_c": _POS,
                "d_max": _POS,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "spacing": _POS,
                "sample_step": _POS,
                "offset": {"type": "number", "minimum": 0},
                "speed": _POS,
            },
        },
    },
}

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "scenarios")


def bundled(name: str) -> str:
    """Path of a scenario shipped with the package (``exp1``, ``exp2``, ``undisturbed``)."""
    path = os.path.join(SCENARIO_DIR, name if name.endswith(".yaml") else name + ".yaml")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return path


def _key_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        # the message is "'robots' is a required property"
        missing = err.message.split("'")[1]
        parts.append(missing)
    elif err.validator == "additionalProperties":
        extra = err.message.split("'")[1] if "'" in err.message else "?"
        parts.append(extra)
    return ".".join(parts) or "<root>"


def validate(doc) -> None:
    """Raise :class:`ScenarioError` naming the offending key."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(f"scenario key '{_key_path(err)}': {err.message}")


def _box(d) -> tuple[float, float, float, float]:
    return (float(d["x_min"]), float(d["x_max"]), float(d["y_min"]), float(d["y_max"]))


def _model(spec):
    kw = {k: float(spec[k]) for k in ("lookahead", "v_max", "w_max") if k in spec}
    if spec["model"] == "unicycle":
        return UnicycleModel(**kw)
    if "lookahead" in kw or "w_max" in kw:
        raise ScenarioError(f"robot '{spec['name']}': single_integrator takes only v_max")
    return SingleIntegratorModel(**kw)


def from_dict(doc) -> Scenario:
    validate(doc)
    try:
        robots = [RobotSpec(r["name"], r["kind"], _model(r), r["initial_state"]) for r in doc["robots"]]
        tasks = [BarrierTask(tuple(t["goal"]), t.get("name", f"task{j}"))
                 for j, t in enumerate(doc["tasks"])]
        team_doc = dict(doc.get("team", {}))
        if "pi_star" in team_doc:
            team_doc["pi_star"] = tuple(float(v) for v in team_doc["pi_star"])
        team = TeamConfig(len(robots), len(tasks), **team_doc)
        dists = [GroundTruthDisturbance(_box(d["region"]), float(d["gain"]),
                                        frozenset(d.get("affected_kinds", ["ground"])))
                 for d in doc.get("disturbances", [])]
        gp = doc.get("gp", {})
        kernel = KernelParams(
            signal_var=float(gp.get("signal_std", 0.01)) ** 2,
            lengthscale=float(gp.get("lengthscale", 0.3)),
            noise_var=float(gp.get("noise_std", 1e-3)) ** 2,
        )
        estimate = DisturbanceEstimateConfig(float(gp.get("k_c", 2.0)), float(gp.get("d_max", 0.10)))
        sweep = SweepConfig(**{k: float(v) for k, v in doc.get("sweep", {}).items()})
        init_s = None
        if any("initial_specialization" in r for r in doc["robots"]):
            init_s = np.array([r.get("initial_specialization", [1.0] * len(tasks))
                               for r in doc["robots"]], dtype=float)
        return Scenario(
            name=doc["name"], arena=_box(doc["arena"]), robots=robots, tasks=tasks, team=team,
            disturbances=dists, kernel=kernel, estimate=estimate, sweep=sweep,
            beta1=float(doc.get("beta1", 0.05)), dt=float(doc.get("dt", 0.033)),
            steps=int(doc.get("steps", 3000)), seed=int(doc.get("seed", 0)),
            initial_specializations=init_s, tracked_robot=int(doc.get("tracked_robot", 0)),
        )
    except InvalidArgument as exc:
        raise ScenarioError(str(exc)) from exc


def load(path) -> Scenario:
    """Read and validate a scenario file. I/O problems surface as ``OSError``."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return from_dict(doc)


def with_overrides(scenario: Scenario, *, steps: Optional[int] = None, seed: Optional[int] = None,
                   d_max: Optional[float] = None, k_c: Optional[float] = None,
                   beta1: Optional[float] = None, mode: Optional[str] = None) -> Scenario:
    """Copy of ``scenario`` with command-line overrides applied."""
    est = scenario.estimate
    if d_max is not None or k_c is not None:
        est = DisturbanceEstimateConfig(est.k_c if k_c is None else k_c,
                                        est.d_max if d_max is None else d_max)
    team = scenario.team if mode is None else replace(scenario.team, mode=mode)
    return replace(
        scenario,
        steps=scenario.steps if steps is None else steps,
        seed=scenario.seed if seed is None else seed,
        beta1=scenario.beta1 if beta1 is None else beta1,
        estimate=est,
        team=team,
    )
