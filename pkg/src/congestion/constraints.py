"""Divergence constraint families for flow optimization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import PreconditionError
from .flows import NodeMeasure
from .graph import DirectedGraph

BALANCE_TOL = 1e-9


class FixedMeasure:
    """div i = f with f balanced and its parts unit probability measures."""

    __slots__ = ("f",)

    def __init__(self, f: NodeMeasure):
        total = f.total()
        plus = float(np.maximum(f.values, 0.0).sum())
        minus = float(np.maximum(-f.values, 0.0).sum())
        if abs(total) > BALANCE_TOL:
            raise PreconditionError(f"divergence data must balance to zero, sums to {total:.3g}")
        if abs(plus - 1.0) > BALANCE_TOL or abs(minus - 1.0) > BALANCE_TOL:
            raise PreconditionError(
                f"positive/negative parts must carry unit mass, got {plus:.3g}/{minus:.3g}"
            )
        self.f = f

    @classmethod
    def between(cls, mu: NodeMeasure, nu: NodeMeasure) -> "FixedMeasure":
        """Demand sending mu to nu; supports must not overlap."""
        if set(mu.support()) & set(nu.support()):
            raise PreconditionError("source and target supports overlap")
        return cls(mu - nu)

    @property
    def graph(self) -> DirectedGraph:
        return self.f.graph

    def to_json(self) -> dict:
        return {
            "kind": "fixed",
            "f": {x: float(v) for x, v in zip(self.f.graph.nodes, self.f.values) if v != 0.0},
        }


class TargetSet:
    """div i = mu off the target set; targets may only absorb mass."""

    __slots__ = ("mu", "targets")

    def __init__(self, mu: NodeMeasure, targets):
        if not mu.is_probability(BALANCE_TOL):
            raise PreconditionError("the transported measure must be a probability")
        tset = frozenset(targets)
        if not tset:
            raise PreconditionError("target set must be nonempty")
        for x in tset:
            if x not in mu.graph.node_index:
                raise PreconditionError(f"target {x!r} is not a node")
        self.mu = mu
        self.targets = tset

    @property
    def graph(self) -> DirectedGraph:
        return self.mu.graph

    def to_json(self) -> dict:
        g = self.graph
        return {
            "kind": "target",
            "mu": {x: float(v) for x, v in zip(g.nodes, self.mu.values) if v != 0.0},
            "S": sorted(self.targets, key=g.index),
        }


class Capacity:
    """Unit mass from a source set to a disjoint sink set, free split."""

    __slots__ = ("sources", "sinks", "graph")

    def __init__(self, graph: DirectedGraph, sources, sinks):
        s_minus = frozenset(sources)
        s_plus = frozenset(sinks)
        if not s_minus or not s_plus:
            raise PreconditionError("capacity sets must be nonempty")
        if s_minus & s_plus:
            raise PreconditionError("capacity sets must be disjoint")
        for x in s_minus | s_plus:
            if x not in graph.node_index:
                raise PreconditionError(f"{x!r} is not a node")
        self.graph = graph
        self.sources = s_minus
        self.sinks = s_plus

    def to_json(self) -> dict:
        g = self.graph
        return {
            "kind": "capacity",
            "S_minus": sorted(self.sources, key=g.index),
            "S_plus": sorted(self.sinks, key=g.index),
        }


DivergenceConstraint = Union[FixedMeasure, TargetSet, Capacity]


def constraint_from_json(graph: DirectedGraph, obj: dict) -> DivergenceConstraint:
    kind = obj["kind"]
    if kind == "fixed":
        return FixedMeasure(NodeMeasure.of(graph, obj["f"]))
    if kind == "target":
        return TargetSet(NodeMeasure.of(graph, obj["mu"]), obj["S"])
    if kind == "capacity":
        return Capacity(graph, obj["S_minus"], obj["S_plus"])
    raise PreconditionError(f"unknown constraint kind {kind!r}")
