"""Scenario files: schema, validation, and construction of solver inputs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import jsonschema

from .constraints import DivergenceConstraint, constraint_from_json
from .errors import PreconditionError
from .flows import NodeMeasure
from .graph import DirectedGraph
from .potentials import LocalSeparable, QuadraticForm

SCHEMA_VERSION = 1

_GRAPH_SCHEMA = {
    "type": "object",
    "required": ["nodes", "edges"],
    "properties": {
        "nodes": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "edges": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "string"},
                "minItems": 2,
                "maxItems": 2,
            },
        },
    },
}

_POTENTIAL_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "oneOf": [
        {
            "properties": {
                "kind": {"const": "local"},
                "xi": {"type": "array", "items": {"type": "number"}},
                "a": {"type": "array", "items": {"type": "number"}},
                "q": {"type": "number", "exclusiveMinimum": 1},
            },
            "required": ["kind", "xi", "a"],
        },
        {
            "properties": {
                "kind": {"const": "quadratic"},
                "Q": {
                    "type": "array",
                    "items": {"type": "array", "minItems": 3, "maxItems": 3},
                },
                "c": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["kind", "Q", "c"],
        },
    ],
}

_MEASURE_SCHEMA = {"type": "object", "additionalProperties": {"type": "number"}}

_CONSTRAINT_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "oneOf": [
        {
            "properties": {"kind": {"const": "fixed"}, "f": _MEASURE_SCHEMA},
            "required": ["kind", "f"],
        },
        {
            "properties": {
                "kind": {"const": "target"},
                "mu": _MEASURE_SCHEMA,
                "S": {"type": "array", "items": {"type": "string"}},
            },
            "required": ["kind", "mu", "S"],
        },
        {
            "properties": {
                "kind": {"const": "capacity"},
                "S_minus": {"type": "array", "items": {"type": "string"}},
                "S_plus": {"type": "array", "items": {"type": "string"}},
            },
            "required": ["kind", "S_minus", "S_plus"],
        },
    ],
}

_SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "parameters": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "number"}},
        },
        "warm_start": {"type": "boolean"},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "kind"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "kind": {
            "enum": ["geodesic", "beckmann", "dynamic", "one_road", "two_roads"]
        },
        "name": {"type": "string"},
        "graph": _GRAPH_SCHEMA,
        "metric": {"type": "array", "items": {"type": "number"}},
        "sources": {"type": "array", "items": {"type": "string"}},
        "potential": _POTENTIAL_SCHEMA,
        "constraint": _CONSTRAINT_SCHEMA,
        "mu": _MEASURE_SCHEMA,
        "nu": _MEASURE_SCHEMA,
        "T": {"type": "integer", "minimum": 1},
        "beta": {"type": "number", "minimum": 0},
        "eps": {"type": "number", "minimum": 0},
        "m1": {"type": "number", "minimum": 0},
        "m2": {"type": "number", "minimum": 0},
        "gamma": {"type": "number", "minimum": 0},
        "options": {
            "type": "object",
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "seed": {"type": ["integer", "null"]},
            },
        },
        "checks": {
            "type": "object",
            "additionalProperties": {"type": "number"},
        },
        "sweep": _SWEEP_SCHEMA,
    },
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "geodesic"}}},
            "then": {"required": ["graph", "metric", "sources"]},
        },
        {
            "if": {"properties": {"kind": {"const": "beckmann"}}},
            "then": {"required": ["graph", "potential", "constraint"]},
        },
        {
            "if": {"properties": {"kind": {"const": "dynamic"}}},
            "then": {"required": ["graph", "potential", "mu", "nu", "T"]},
        },
        {
            "if": {"properties": {"kind": {"const": "one_road"}}},
            "then": {"required": ["T", "beta", "eps"]},
        },
        {
            "if": {"properties": {"kind": {"const": "two_roads"}}},
            "then": {"required": ["T", "m1", "m2", "gamma", "eps"]},
        },
    ],
}

DEFAULT_CHECKS = {
    "constitutive": 1e-6,
    "divergence": 1e-6,
    "wardrop_gap": 1e-5,
    "kkt": 1e-6,
    "conservation": 1e-6,
    "closed_form": 1e-8,
}


class ScenarioError(PreconditionError):
    """Scenario file failed validation; carries a JSON pointer to the field."""

    def __init__(self, message, pointer="$"):
        self.pointer = pointer
        super().__init__(f"{message} (at {pointer})")


@dataclass
class Scenario:
    kind: str
    raw: dict
    path: FsPath | None = None
    graph: DirectedGraph | None = None
    potential: object = None
    constraint: DivergenceConstraint | None = None
    params: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        if "name" in self.raw:
            return self.raw["name"]
        return self.path.stem if self.path else self.kind

    @property
    def options(self) -> dict:
        return dict(self.raw.get("options", {}))

    @property
    def checks(self) -> dict:
        merged = dict(DEFAULT_CHECKS)
        merged.update(self.raw.get("checks", {}))
        return merged

    @property
    def sweep(self) -> dict | None:
        return self.raw.get("sweep")


def parse_potential(obj: dict, graph: DirectedGraph):
    kind = obj["kind"]
    if kind == "local":
        return LocalSeparable(graph, obj["xi"], obj["a"], obj.get("q", 2.0))
    if kind == "quadratic":
        return QuadraticForm.from_triplets(graph, obj["Q"], obj["c"])
    raise ScenarioError(f"unknown potential kind {kind!r}", "$.potential.kind")


def validate_scenario(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=jsonschema.exceptions.relevance)
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise ScenarioError(best.message, best.json_path)


def parse_scenario(doc: dict, path: FsPath | None = None) -> Scenario:
    validate_scenario(doc)
    kind = doc["kind"]
    scenario = Scenario(kind=kind, raw=doc, path=path)
    try:
        if kind in ("geodesic", "beckmann", "dynamic"):
            scenario.graph = DirectedGraph.from_json(doc["graph"])
        if kind == "geodesic":
            metric = doc["metric"]
            if len(metric) != scenario.graph.n_edges:
                raise ScenarioError(
                    f"metric has {len(metric)} entries for {scenario.graph.n_edges} edges",
                    "$.metric",
                )
            scenario.params = {"metric": metric, "sources": doc["sources"]}
        elif kind == "beckmann":
            scenario.potential = parse_potential(doc["potential"], scenario.graph)
            scenario.constraint = constraint_from_json(scenario.graph, doc["constraint"])
        elif kind == "dynamic":
            scenario.potential = parse_potential(doc["potential"], scenario.graph)
            scenario.params = {
                "mu": NodeMeasure.of(scenario.graph, doc["mu"]),
                "nu": NodeMeasure.of(scenario.graph, doc["nu"]),
                "T": doc["T"],
            }
        elif kind == "one_road":
            scenario.params = {k: doc[k] for k in ("T", "beta", "eps")}
        elif kind == "two_roads":
            scenario.params = {k: doc[k] for k in ("T", "m1", "m2", "gamma", "eps")}
    except ScenarioError:
        raise
    except (KeyError, ValueError, PreconditionError) as exc:
        raise ScenarioError(str(exc)) from exc
    return scenario


def load_scenario(path) -> Scenario:
    p = FsPath(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    return parse_scenario(doc, p)
