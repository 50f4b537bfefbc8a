"""Scenario files: parsing, serialization and validation."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema
import yaml

from .errors import ConfigurationError

SET_ARGS = ("set", "attractor", "neighborhood")
SET_LIST_ARGS = ("attractors", "neighborhoods", "candidates")
# ops whose (attractor, neighborhood) pair should be verified first when a verification is requested
_NEEDS_VERIFIED = ("basin_estimate", "repeller_of", "uniform_entrance_time")
BUNDLED = ("double-well-morse", "double-well-pair")


def load_schema() -> dict:
    text = resources.files("morseflow").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


@dataclass
class ScenarioConfig:
    """In-memory form of a scenario file; keys mirror the file layout."""

    name: str
    system: dict
    partition: dict
    noise: dict
    seeds: Any
    sets: dict = field(default_factory=dict)
    schedules: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    analyses: list = field(default_factory=list)
    output_dir: Optional[str] = None
    description: Optional[str] = None

    _KEYS = ("name", "description", "system", "partition", "noise", "seeds", "sets", "schedules",
             "search", "analyses", "output_dir")

    @classmethod
    def from_dict(cls, data: dict, validate: bool = True) -> "ScenarioConfig":
        if validate:
            problems = validate_dict(data)
            if problems:
                raise ConfigurationError(f"scenario has {len(problems)} problem(s)", problems)
        data = copy.deepcopy(data)
        return cls(**{k: data[k] for k in cls._KEYS if k in data})

    def to_dict(self) -> dict:
        out = {}
        for k in self._KEYS:
            v = getattr(self, k)
            if v is None:
                continue
            out[k] = copy.deepcopy(v)
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    @property
    def seed_list(self) -> list:
        s = self.seeds
        if isinstance(s, dict):
            return list(range(int(s["base"]), int(s["base"]) + int(s["count"])))
        return [int(v) for v in s]


def parse(text: str, validate: bool = True) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"scenario is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("scenario must be a mapping at top level")
    return ScenarioConfig.from_dict(data, validate)


def serialize(cfg: ScenarioConfig) -> str:
    return cfg.to_yaml()


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise ConfigurationError(f"unknown bundled scenario {name!r}; known: {', '.join(BUNDLED)}")
    return Path(str(resources.files("morseflow").joinpath(f"scenarios/{name}.yaml")))


def load(ref: str, validate: bool = True) -> ScenarioConfig:
    """Load a scenario from a file path or a bundled scenario name."""
    p = Path(ref)
    if not p.exists() and ref in BUNDLED:
        p = bundled_path(ref)
    if not p.exists():
        raise ConfigurationError(f"scenario file {ref!r} not found (bundled: {', '.join(BUNDLED)})")
    return parse(p.read_text(), validate)


# ---------------------------------------------------------------- validation
def _where(err) -> str:
    loc = "/".join(str(x) for x in err.absolute_path)
    return loc or "<root>"


def validate_dict(data: dict) -> list:
    """Every problem with a scenario, as readable strings; empty when valid."""
    validator = jsonschema.Draft202012Validator(load_schema())
    problems = [f"{_where(e)}: {e.message}" for e in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))]
    if problems:
        return problems
    return _semantic_problems(data)


def schedule_T_max(spec: dict) -> float:
    if "T_ladder" in spec:
        return float(max(spec["T_ladder"]))
    return float(spec.get("T_max", 0.0))


def _semantic_problems(data: dict) -> list:
    problems = []
    sets = data.get("sets", {})
    schedules = data.get("schedules", {})
    analyses = data.get("analyses", [])
    dim = len(data["system"].get("box", {}).get("lower", [0.0]))
    box = data["system"].get("box", {"lower": [-1.0], "upper": [1.0]})
    if len(box["lower"]) != len(box["upper"]):
        problems.append("system/box: lower and upper differ in length")
    for name, spec in sets.items():
        if "intervals" in spec and dim != 1:
            problems.append(f"sets/{name}: intervals need a 1-D box, use boxes")
        for key in ("boxes", "points"):
            for item in spec.get(key, []):
                pts = item if key == "boxes" else [item]
                if any(len(p) != dim for p in pts):
                    problems.append(f"sets/{name}: {key} entries must have dimension {dim}")
                    break
    for name, spec in schedules.items():
        if "T_ladder" not in spec and not ("T_max" in spec and "step" in spec):
            problems.append(f"schedules/{name}: give T_ladder or both T_max and step")
    ids = [a["id"] for a in analyses]
    seen = set()
    for a in analyses:
        if a["id"] in seen:
            problems.append(f"analyses/{a['id']}: duplicate id")
        seen.add(a["id"])
    for a in analyses:
        args = a.get("args", {})
        where = f"analyses/{a['id']}"
        for key in SET_ARGS:
            if key in args and args[key] not in sets:
                problems.append(f"{where}: {key} refers to undefined set {args[key]!r}")
        for key in SET_LIST_ARGS:
            for nm in args.get(key, []) if isinstance(args.get(key), list) else []:
                if isinstance(nm, str) and nm not in sets:
                    problems.append(f"{where}: {key} refers to undefined set {nm!r}")
        if "repeller" in args and args["repeller"] not in sets and args["repeller"] not in ids:
            problems.append(f"{where}: repeller {args['repeller']!r} is neither a set nor an analysis id")
        if "decomposition" in args and args["decomposition"] not in ids:
            problems.append(f"{where}: decomposition {args['decomposition']!r} is not an analysis id")
        if "schedule" in args and args["schedule"] not in schedules:
            problems.append(f"{where}: schedule {args['schedule']!r} is undefined")
        for dep in a.get("after", []):
            if dep not in ids:
                problems.append(f"{where}: after refers to unknown analysis {dep!r}")
        for key in _required_args(a["op"]):
            if key not in args:
                problems.append(f"{where}: {a['op']} needs argument {key!r}")
    problems.extend(_horizon_problems(data))
    if not problems:
        try:
            order_analyses(analyses)
        except ConfigurationError as exc:
            problems.extend(exc.problems)
    return problems


def _required_args(op: str) -> tuple:
    return {
        "omega_limit": ("set", "schedule"),
        "alpha_limit": ("set", "schedule"),
        "invariant_hull": ("set", "T_max"),
        "is_forward_invariant": ("set", "t_checks"),
        "verify_attractor": ("attractor", "neighborhood", "schedule"),
        "verify_strong_neighborhood": ("neighborhood", "attractor", "t_checks"),
        "basin_estimate": ("attractor", "neighborhood", "T_max"),
        "uniform_entrance_time": ("set", "neighborhood", "T_max"),
        "repeller_of": ("attractor", "neighborhood", "schedule"),
        "build_decomposition": ("attractors", "neighborhoods", "schedule"),
        "morse_union_identity_check": ("decomposition",),
        "coarsen": ("decomposition", "keep"),
        "verify_by_lyapunov": ("decomposition",),
        "lyapunov_field": ("x_grid",),
        "orbit_profile": ("x", "t_grid"),
    }.get(op, ())


def required_horizon(data: dict) -> tuple:
    """Lookback ``(past, future)`` the noise grid must cover for every requested analysis."""
    schedules = data.get("schedules", {})
    search = data.get("search", {})
    s_lo = -float(search.get("t_lo", -10.0))
    s_hi = float(search.get("t_hi", 10.0))
    past, future = 0.0, 0.0
    basin_T = 0.0
    for a in data.get("analyses", []):
        args = a.get("args", {})
        T = schedule_T_max(schedules[args["schedule"]]) if args.get("schedule") in schedules else 0.0
        op = a["op"]
        if op in ("omega_limit", "verify_attractor"):
            past = max(past, T)
        if op in ("alpha_limit", "repeller_of", "build_decomposition"):
            future = max(future, T)
            basin_T = max(basin_T, T)
        if op in ("invariant_hull",):
            past = max(past, float(args.get("T_max", 0.0)))
        if op in ("basin_estimate", "uniform_entrance_time"):
            future = max(future, float(args.get("T_max", 0.0)))
        if op in ("is_forward_invariant", "verify_strong_neighborhood"):
            future = max(future, max(args.get("t_checks", [0.0])))
        if op in ("verify_by_lyapunov", "lyapunov_field", "orbit_profile"):
            if op == "orbit_profile":
                grid = args.get("t_grid", {})
                shift = float(grid.get("stop", 0.0)) if isinstance(grid, dict) else max(grid, default=0.0)
            else:
                shift = max(args.get("t_steps", [0.5, 1.0])) if op == "verify_by_lyapunov" else 0.0
            past = max(past, s_lo - shift)
            future = max(future, s_hi + shift, basin_T + shift)
    return past, future


def _horizon_problems(data: dict) -> list:
    noise = data["noise"]
    past, future = required_horizon(data)
    problems = []
    if -float(noise["t_min"]) + 1e-9 < past:
        problems.append(f"noise/t_min: horizon {noise['t_min']} does not cover the lookback {-past:g} the analyses need")
    if float(noise["t_max"]) + 1e-9 < future:
        problems.append(f"noise/t_max: horizon {noise['t_max']} does not cover the forward time {future:g} the analyses need")
    for key in ("t_min", "t_max"):
        steps = float(noise[key]) / float(noise["dt"])
        if abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)):
            problems.append(f"noise/{key}: not a whole number of dt steps")
    return problems


def analysis_dependencies(analyses: list) -> dict:
    """Map analysis id to the ids it must run after."""
    ids = {a["id"] for a in analyses}
    deps = {a["id"]: set(a.get("after", [])) for a in analyses}
    verified = {}
    for a in analyses:
        args = a.get("args", {})
        for key in ("decomposition", "repeller"):
            if args.get(key) in ids:
                deps[a["id"]].add(args[key])
        if a["op"] == "verify_attractor":
            verified.setdefault((args.get("attractor"), args.get("neighborhood")), []).append(a["id"])
    for a in analyses:
        args = a.get("args", {})
        if a["op"] in _NEEDS_VERIFIED:
            deps[a["id"]].update(verified.get((args.get("attractor"), args.get("neighborhood")), []))
        if a["op"] == "build_decomposition":
            for pair in zip(args.get("attractors", []), args.get("neighborhoods", [])):
                deps[a["id"]].update(verified.get(pair, []))
    for k in deps:
        deps[k].discard(k)
    return deps


def order_analyses(analyses: list) -> list:
    """Dependency order, stable with respect to file order; cycles are configuration errors."""
    deps = analysis_dependencies(analyses)
    pending = [a["id"] for a in analyses]
    done, order = set(), []
    while pending:
        ready = [i for i in pending if deps[i] <= done]
        if not ready:
            raise ConfigurationError("analysis dependency cycle", [f"analyses: dependency cycle among {sorted(pending)}"])
        nxt = ready[0]
        order.append(nxt)
        done.add(nxt)
        pending.remove(nxt)
    return order


def schedule_kwargs(spec: dict) -> dict:
    if "T_ladder" in spec:
        ladder = tuple(float(t) for t in spec["T_ladder"])
    else:
        n = int(round(float(spec["T_max"]) / float(spec["step"])))
        ladder = tuple(float(spec["step"]) * k for k in range(n + 1))
    kw = {"T_ladder": ladder}
    for key in ("stop_tol", "samples_per_cell", "dt"):
        if key in spec:
            kw[key] = spec[key]
    return kw


__all__ = ["ScenarioConfig", "parse", "serialize", "load", "validate_dict", "order_analyses",
           "required_horizon", "bundled_path", "BUNDLED", "load_schema"]
