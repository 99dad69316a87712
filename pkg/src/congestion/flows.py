"""Path profiles, transport plans, edge flows, and the discrete calculus linking them.

Edge flows induced by profiles count repeated edges with multiplicity, which
makes the conservation identity div i[q] = start marginal - end marginal and
the pairing sum_e xi(e) i(e) = E_q[length] exact also on loopy paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from .graph import DirectedGraph, Metric, Path, path_length, shortest_distances

PROB_TOL = 1e-12


def _node_values(graph: DirectedGraph, values) -> np.ndarray:
    vals = np.asarray(values, dtype=float).copy()
    if vals.shape != (graph.n_nodes,):
        raise ValueError(f"expected {graph.n_nodes} node values, got shape {vals.shape}")
    vals.flags.writeable = False
    return vals


class EdgeFlow:
    """A nonnegative per-edge vector."""

    __slots__ = ("graph", "values")

    def __init__(self, graph: DirectedGraph, values):
        vals = np.asarray(values, dtype=float).copy()
        if vals.shape != (graph.n_edges,):
            raise ValueError(f"expected {graph.n_edges} edge values, got shape {vals.shape}")
        if np.any(vals < 0):
            raise ValueError("edge flow has a negative entry")
        vals.flags.writeable = False
        self.graph = graph
        self.values = vals

    @classmethod
    def of(cls, graph: DirectedGraph, by_edge: Mapping) -> "EdgeFlow":
        vals = np.zeros(graph.n_edges)
        for e, v in by_edge.items():
            vals[graph.edge_id(e)] = v
        return cls(graph, vals)

    @classmethod
    def zero(cls, graph: DirectedGraph) -> "EdgeFlow":
        return cls(graph, np.zeros(graph.n_edges))

    def __getitem__(self, edge):
        if isinstance(edge, (int, np.integer)):
            return float(self.values[edge])
        return float(self.values[self.graph.edge_id(edge)])

    def support(self, tol: float = PROB_TOL) -> tuple:
        return tuple(int(k) for k in np.flatnonzero(self.values > tol))

    def __repr__(self):
        return f"EdgeFlow({self.values!r})"


class NodeMeasure:
    """A signed per-node vector (mass data, divergences, demands)."""

    __slots__ = ("graph", "values")

    def __init__(self, graph: DirectedGraph, values):
        self.graph = graph
        self.values = _node_values(graph, values)

    @classmethod
    def of(cls, graph: DirectedGraph, by_node: Mapping, default: float = 0.0):
        vals = np.full(graph.n_nodes, float(default))
        for x, v in by_node.items():
            vals[graph.index(x)] = v
        return cls(graph, vals)

    @classmethod
    def point(cls, graph: DirectedGraph, node, mass: float = 1.0):
        return cls.of(graph, {node: mass})

    def __getitem__(self, node):
        return float(self.values[self.graph.index(node)])

    def total(self) -> float:
        return float(self.values.sum())

    def is_probability(self, tol: float = PROB_TOL) -> bool:
        return bool(np.all(self.values >= -tol) and abs(self.total() - 1.0) <= tol)

    def positive_part(self) -> "NodeMeasure":
        return NodeMeasure(self.graph, np.maximum(self.values, 0.0))

    def negative_part(self) -> "NodeMeasure":
        return NodeMeasure(self.graph, np.maximum(-self.values, 0.0))

    def support(self, tol: float = PROB_TOL) -> tuple:
        return tuple(
            self.graph.nodes[k] for k in np.flatnonzero(np.abs(self.values) > tol)
        )

    def __sub__(self, other: "NodeMeasure") -> "NodeMeasure":
        if other.graph != self.graph:
            raise ValueError("measures live on different graphs")
        return NodeMeasure(self.graph, self.values - other.values)

    def __repr__(self):
        return f"NodeMeasure({self.values!r})"


class NodeFunction:
    """A per-node potential value."""

    __slots__ = ("graph", "values")

    def __init__(self, graph: DirectedGraph, values):
        self.graph = graph
        self.values = _node_values(graph, values)

    @classmethod
    def of(cls, graph: DirectedGraph, by_node: Mapping, default: float = 0.0):
        vals = np.full(graph.n_nodes, float(default))
        for x, v in by_node.items():
            vals[graph.index(x)] = v
        return cls(graph, vals)

    def __getitem__(self, node):
        return float(self.values[self.graph.index(node)])

    def __repr__(self):
        return f"NodeFunction({self.values!r})"


class PathProfile:
    """A sparse probability distribution over paths of one carrier graph."""

    __slots__ = ("graph", "atoms")

    def __init__(self, graph: DirectedGraph, atoms: Mapping[Path, float]):
        cleaned = {}
        for path, weight in atoms.items():
            if path.graph != graph:
                raise ValueError("profile path lives on a different graph")
            w = float(weight)
            if w <= 0:
                raise ValueError(f"profile weight must be positive, got {w}")
            cleaned[path] = cleaned.get(path, 0.0) + w
        total = math.fsum(cleaned.values())
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"profile weights sum to {total}, not 1")
        self.graph = graph
        self.atoms = cleaned

    @classmethod
    def delta(cls, path: Path) -> "PathProfile":
        return cls(path.graph, {path: 1.0})

    @classmethod
    def normalized(cls, graph: DirectedGraph, atoms: Mapping[Path, float]) -> "PathProfile":
        """Build a profile after dividing the weights by their exact total."""
        total = math.fsum(float(w) for w in atoms.values())
        if total <= 0:
            raise ValueError("cannot normalize a profile with no mass")
        return cls(graph, {p: float(w) / total for p, w in atoms.items()})

    def renormalized(self) -> "PathProfile":
        return PathProfile.normalized(self.graph, self.atoms)

    @property
    def support(self) -> tuple:
        return tuple(self.atoms)

    def __len__(self):
        return len(self.atoms)

    def __getitem__(self, path: Path) -> float:
        return self.atoms.get(path, 0.0)

    def items(self):
        return self.atoms.items()

    def to_json(self) -> dict:
        return {
            "paths": [list(p.nodes) for p in self.atoms],
            "weights": [w for w in self.atoms.values()],
        }

    @classmethod
    def from_json(cls, graph: DirectedGraph, obj: dict) -> "PathProfile":
        atoms = {
            Path(graph, tuple(nodes)): w
            for nodes, w in zip(obj["paths"], obj["weights"])
        }
        return cls(graph, atoms)

    def __repr__(self):
        return f"PathProfile({len(self.atoms)} paths)"


class TransportPlan:
    """A probability matrix over ordered node pairs of the carrier graph."""

    __slots__ = ("graph", "matrix")

    def __init__(self, graph: DirectedGraph, matrix):
        m = np.asarray(matrix, dtype=float).copy()
        n = graph.n_nodes
        if m.shape != (n, n):
            raise ValueError(f"plan must be {n}x{n}, got {m.shape}")
        if np.any(m < 0):
            raise ValueError("plan has a negative entry")
        if abs(m.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"plan mass is {m.sum()}, not 1")
        m.flags.writeable = False
        self.graph = graph
        self.matrix = m

    def __getitem__(self, pair):
        x, y = pair
        return float(self.matrix[self.graph.index(x), self.graph.index(y)])

    def to_json(self) -> dict:
        entries = [
            [self.graph.nodes[i], self.graph.nodes[j], float(v)]
            for (i, j), v in np.ndenumerate(self.matrix)
            if v != 0.0
        ]
        return {"entries": entries}

    @classmethod
    def from_json(cls, graph: DirectedGraph, obj: dict) -> "TransportPlan":
        m = np.zeros((graph.n_nodes, graph.n_nodes))
        for x, y, v in obj["entries"]:
            m[graph.index(x), graph.index(y)] = v
        return cls(graph, m)

    def __repr__(self):
        return f"TransportPlan({np.count_nonzero(self.matrix)} entries)"


def transport_plan(q: PathProfile) -> TransportPlan:
    """Joint start/end distribution induced by a profile."""
    g = q.graph
    m = np.zeros((g.n_nodes, g.n_nodes))
    for path, w in q.items():
        m[g.index(path.start), g.index(path.end)] += w
    return TransportPlan(g, m)


def edge_flow(q: PathProfile) -> EdgeFlow:
    """Mass each edge carries under the profile, with edge multiplicity."""
    g = q.graph
    vals = np.zeros(g.n_edges)
    for path, w in q.items():
        for eid in path.edge_ids:
            vals[eid] += w
    return EdgeFlow(g, vals)


def divergence(flow: EdgeFlow) -> NodeMeasure:
    """Outflow minus inflow at each node; total mass cancels pairwise."""
    g = flow.graph
    vals = np.zeros(g.n_nodes)
    np.add.at(vals, g.tail_idx, flow.values)
    np.add.at(vals, g.head_idx, -flow.values)
    return NodeMeasure(g, vals)


def gradient(u: NodeFunction) -> np.ndarray:
    """Per-edge difference u(head) - u(tail)."""
    g = u.graph
    return u.values[g.head_idx] - u.values[g.tail_idx]


def marginals(plan: TransportPlan):
    """Start and end distributions of a plan."""
    g = plan.graph
    return (
        NodeMeasure(g, plan.matrix.sum(axis=1)),
        NodeMeasure(g, plan.matrix.sum(axis=0)),
    )


def erase_loops(path: Path) -> Path:
    """The chronological loop erasure of a path; endpoints are preserved."""
    kept: list = []
    pos: dict = {}
    for x in path.nodes:
        if x in pos:
            for dropped in kept[pos[x] + 1:]:
                del pos[dropped]
            del kept[pos[x] + 1:]
        else:
            pos[x] = len(kept)
            kept.append(x)
    return Path(path.graph, tuple(kept))


def loop_erasure(q: PathProfile) -> PathProfile:
    """Push-forward of a profile under loop erasure, merging equal images."""
    atoms: dict[Path, float] = {}
    for path, w in q.items():
        simple = erase_loops(path)
        atoms[simple] = atoms.get(simple, 0.0) + w
    return PathProfile(q.graph, atoms)


def expected_length(q: PathProfile, metric: Metric) -> float:
    """Average path length under the profile."""
    return math.fsum(w * path_length(metric, p) for p, w in q.items())


def expected_distance(plan: TransportPlan, metric: Metric) -> float:
    """Average endpoint distance under a plan (the Kantorovich pairing)."""
    g = plan.graph
    total = 0.0
    for i in range(g.n_nodes):
        row = plan.matrix[i]
        if not row.any():
            continue
        sd = shortest_distances(g, metric, [g.nodes[i]])
        for j in np.flatnonzero(row):
            total += row[j] * sd.dist[j]
    return float(total)
