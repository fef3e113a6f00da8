"""JSON network description (schema version 1) and its canonical hash.

A config file looks like::

    {
      "schema": 1,
      "name": "mean-field",
      "N": 200,
      "streams": [
        {"interarrival": {"kind": "exponential", "rate": 140.0},
         "selection": {"kind": "mean_field", "D": 2}}
      ],
      "service": {"mode": "class", "all": {"kind": "exponential", "rate": 1.0}},
      "discipline": {"kind": "fifo"},
      "assignment": {"kind": "jsq"},
      "tie_break": "uniform",
      "run": {"horizon": 1000.0, "seed": 1}
    }

Selection kinds are mean_field (D), mean_field_replacement (D), circle
(radius) and explicit (sets: [[queues], probability] pairs). Class-mode
service takes "all" or a "per_queue" list; station mode takes "default"
and/or "per_class" entries {"stream", "set", "law"}. The optional "run" and
"experiment" objects hold defaults that command-line flags override.
"""
from __future__ import annotations

import hashlib
import json
from typing import Any

from .distributions import DistributionError, from_dict
from .network import (
    AssignmentRule,
    CircleNeighborhood,
    ClassIndependent,
    Discipline,
    Explicit,
    MeanFieldChoose,
    MeanFieldWithReplacement,
    NetworkSpec,
    SpecError,
    StationIndependent,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Config problem; `where` is a JSON path or a line:column location."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where
        self.message = message


def _get(obj: dict, key: str, path: str, types=None, default=Any):
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    if key not in obj:
        if default is Any:
            raise ConfigError(f"{path}.{key}", "missing field")
        return default
    val = obj[key]
    if types is not None and (isinstance(val, bool) or not isinstance(val, types)):
        raise ConfigError(f"{path}.{key}", f"unexpected value {val!r}")
    return val


def _dist(d, path):
    try:
        return from_dict(d)
    except DistributionError as e:
        raise ConfigError(path, str(e)) from None


def _selection(d, path):
    kind = _get(d, "kind", path, str)
    if kind == "mean_field":
        return MeanFieldChoose(_get(d, "D", path, int))
    if kind == "mean_field_replacement":
        return MeanFieldWithReplacement(_get(d, "D", path, int))
    if kind == "circle":
        return CircleNeighborhood(_get(d, "radius", path, int))
    if kind == "explicit":
        sets = _get(d, "sets", path, list)
        items = []
        for i, entry in enumerate(sets):
            if not (isinstance(entry, list) and len(entry) == 2 and isinstance(entry[0], list)):
                raise ConfigError(f"{path}.sets[{i}]", "expected [[queues...], probability]")
            items.append((tuple(int(q) for q in entry[0]), float(entry[1])))
        try:
            return Explicit(tuple(items))
        except SpecError as e:
            raise ConfigError(f"{path}.sets", str(e)) from None
    raise ConfigError(f"{path}.kind", f"unknown selection kind {kind!r}")


def _service(d, N, path):
    mode = _get(d, "mode", path, str)
    if mode == "class":
        if "all" in d:
            return ClassIndependent((_dist(d["all"], f"{path}.all"),) * N)
        laws = _get(d, "per_queue", path, list)
        return ClassIndependent(tuple(_dist(x, f"{path}.per_queue[{i}]") for i, x in enumerate(laws)))
    if mode == "station":
        default = d.get("default")
        default = None if default is None else _dist(default, f"{path}.default")
        per = []
        for i, e in enumerate(_get(d, "per_class", path, list, [])):
            p = f"{path}.per_class[{i}]"
            per.append((_get(e, "stream", p, int), tuple(_get(e, "set", p, list)), _dist(_get(e, "law", p), f"{p}.law")))
        return StationIndependent(default, tuple(per))
    raise ConfigError(f"{path}.mode", f"unknown service mode {mode!r}")


def spec_from_dict(d: dict) -> NetworkSpec:
    if not isinstance(d, dict):
        raise ConfigError("$", "config must be a JSON object")
    version = _get(d, "schema", "$", int)
    if version != SCHEMA_VERSION:
        raise ConfigError("$.schema", f"unsupported schema version {version}")
    N = _get(d, "N", "$", int)
    streams = _get(d, "streams", "$", list)
    inter, sel = [], []
    for i, s in enumerate(streams):
        p = f"$.streams[{i}]"
        inter.append(_dist(_get(s, "interarrival", p), f"{p}.interarrival"))
        sel.append(_selection(_get(s, "selection", p, dict), f"{p}.selection"))
    service = _service(_get(d, "service", "$", dict), N, "$.service")
    disc = _get(d, "discipline", "$", dict, {"kind": "fifo"})
    asg = _get(d, "assignment", "$", dict, {"kind": "jsq"})
    try:
        discipline = Discipline(_get(disc, "kind", "$.discipline", str), disc.get("direction", ""))
    except SpecError as e:
        raise ConfigError("$.discipline", str(e)) from None
    try:
        assignment = AssignmentRule(_get(asg, "kind", "$.assignment", str), int(asg.get("kappa", 0)))
    except (SpecError, TypeError, ValueError) as e:
        raise ConfigError("$.assignment", str(e)) from None
    try:
        return NetworkSpec(
            N=N,
            interarrival=tuple(inter),
            selection=tuple(sel),
            service=service,
            discipline=discipline,
            assignment=assignment,
            tie_break=_get(d, "tie_break", "$", str, "uniform"),
            name=_get(d, "name", "$", str, ""),
        )
    except SpecError as e:
        raise ConfigError("$", str(e)) from None


def _selection_dict(rule) -> dict:
    if isinstance(rule, MeanFieldChoose):
        return {"kind": "mean_field", "D": rule.D}
    if isinstance(rule, MeanFieldWithReplacement):
        return {"kind": "mean_field_replacement", "D": rule.D}
    if isinstance(rule, CircleNeighborhood):
        return {"kind": "circle", "radius": rule.radius}
    return {"kind": "explicit", "sets": [[list(A), p] for A, p in rule.sets]}


def spec_to_dict(spec: NetworkSpec) -> dict:
    """Canonical dict form; spec_from_dict inverts it exactly."""
    if isinstance(spec.service, ClassIndependent):
        service = {"mode": "class", "per_queue": [d.to_dict() for d in spec.service.per_queue]}
    else:
        service = {
            "mode": "station",
            "default": None if spec.service.default is None else spec.service.default.to_dict(),
            "per_class": [{"stream": k, "set": list(A), "law": d.to_dict()} for k, A, d in spec.service.per_class],
        }
    disc = {"kind": spec.discipline.kind}
    if spec.discipline.direction:
        disc["direction"] = spec.discipline.direction
    asg = {"kind": spec.assignment.kind}
    if spec.assignment.kind == "jsq_handicap":
        asg["kappa"] = spec.assignment.kappa
    return {
        "schema": SCHEMA_VERSION,
        "name": spec.name,
        "N": spec.N,
        "streams": [
            {"interarrival": g.to_dict(), "selection": _selection_dict(r)}
            for g, r in zip(spec.interarrival, spec.selection)
        ],
        "service": service,
        "discipline": disc,
        "assignment": asg,
        "tie_break": spec.tie_break,
    }


def canonical_json(spec: NetworkSpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))


def spec_hash(spec: NetworkSpec) -> str:
    return hashlib.sha256(canonical_json(spec).encode()).hexdigest()


def load_config(path) -> tuple:
    """(spec, full config dict) from a JSON file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(str(path), str(e)) from None
    return loads_config(text)


def loads_config(text: str) -> tuple:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno} column {e.colno}", e.msg) from None
    return spec_from_dict(d), d
