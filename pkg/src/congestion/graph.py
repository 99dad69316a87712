"""Finite directed graphs, paths, signed metrics, and shortest-path machinery.

Distances are computed by label-correcting (Bellman-Ford style) passes, so
metrics may carry negative values. Loops of negative total length are
surfaced as errors with a witness loop instead of silently diverging.
All tie-breaking is by declaration order of nodes and edges, which makes
every traversal in this module deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import InvalidPathError, NegativeLoopError, OddnessError

NodeId = Hashable

GEO_TOL = 1e-9
LOOP_TOL = 1e-9


def _as_edge(obj) -> tuple:
    e = tuple(obj)
    if len(e) != 2:
        raise ValueError(f"an edge is a (tail, head) pair, got {obj!r}")
    return e


class DirectedGraph:
    """A finite directed graph with dense node and edge indices.

    Self-loops are allowed; at most one edge per ordered node pair. Node and
    edge order is fixed at construction and used for all array-valued
    quantities and for deterministic tie-breaking.
    """

    __slots__ = (
        "nodes",
        "edges",
        "node_index",
        "edge_index",
        "tail_idx",
        "head_idx",
        "_out",
        "_in",
        "_reverse",
    )

    def __init__(self, nodes: Iterable[NodeId], edges: Iterable[tuple]):
        self.nodes = tuple(nodes)
        self.edges = tuple(_as_edge(e) for e in edges)
        self.node_index = {x: k for k, x in enumerate(self.nodes)}
        if len(self.node_index) != len(self.nodes):
            raise ValueError("duplicate node identifiers")
        self.edge_index = {}
        for k, e in enumerate(self.edges):
            if e in self.edge_index:
                raise ValueError(f"duplicate edge {e}")
            if e[0] not in self.node_index or e[1] not in self.node_index:
                raise ValueError(f"edge {e} references an undeclared node")
            self.edge_index[e] = k
        self.tail_idx = np.array([self.node_index[e[0]] for e in self.edges], dtype=int)
        self.head_idx = np.array([self.node_index[e[1]] for e in self.edges], dtype=int)
        out: list[list[int]] = [[] for _ in self.nodes]
        inc: list[list[int]] = [[] for _ in self.nodes]
        for k, e in enumerate(self.edges):
            out[self.node_index[e[0]]].append(k)
            inc[self.node_index[e[1]]].append(k)
        self._out = tuple(tuple(v) for v in out)
        self._in = tuple(tuple(v) for v in inc)
        self._reverse = tuple(
            self.edge_index.get((e[1], e[0])) for e in self.edges
        )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def index(self, node: NodeId) -> int:
        return self.node_index[node]

    def edge_id(self, edge) -> int:
        return self.edge_index[_as_edge(edge)]

    def has_edge(self, edge) -> bool:
        return _as_edge(edge) in self.edge_index

    def out_edges(self, node_idx: int) -> tuple:
        return self._out[node_idx]

    def in_edges(self, node_idx: int) -> tuple:
        return self._in[node_idx]

    def reverse_edge_id(self, eid: int):
        """Edge id of the reversed edge, or None when it is absent."""
        return self._reverse[eid]

    def __eq__(self, other):
        return (
            isinstance(other, DirectedGraph)
            and self.nodes == other.nodes
            and self.edges == other.edges
        )

    def __hash__(self):
        return hash((self.nodes, self.edges))

    def __repr__(self):
        return f"DirectedGraph({self.n_nodes} nodes, {self.n_edges} edges)"

    def to_json(self) -> dict:
        return {"nodes": list(self.nodes), "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, obj: dict) -> "DirectedGraph":
        return cls(obj["nodes"], [tuple(e) for e in obj["edges"]])


@dataclass(frozen=True)
class Path:
    """A finite walk given by its node sequence; length-0 paths are allowed."""

    graph: DirectedGraph
    nodes: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if len(self.nodes) == 0:
            raise InvalidPathError("a path needs at least one node")
        for x in self.nodes:
            if x not in self.graph.node_index:
                raise InvalidPathError(f"node {x!r} is not in the graph")
        for a, b in zip(self.nodes, self.nodes[1:]):
            if (a, b) not in self.graph.edge_index:
                raise InvalidPathError(f"({a!r}, {b!r}) is not an edge of the graph")

    @property
    def start(self):
        return self.nodes[0]

    @property
    def end(self):
        return self.nodes[-1]

    @property
    def n_edges(self) -> int:
        return len(self.nodes) - 1

    @property
    def edge_seq(self) -> tuple:
        return tuple(zip(self.nodes, self.nodes[1:]))

    @property
    def edge_ids(self) -> tuple:
        idx = self.graph.edge_index
        return tuple(idx[e] for e in self.edge_seq)

    @property
    def is_trivial(self) -> bool:
        return len(self.nodes) == 1

    @property
    def is_simple(self) -> bool:
        return len(set(self.nodes)) == len(self.nodes)

    @property
    def is_loop(self) -> bool:
        return self.n_edges >= 1 and self.start == self.end


class Metric:
    """Per-edge real values; ``signed=False`` enforces nonnegativity."""

    __slots__ = ("graph", "values", "signed")

    def __init__(self, graph: DirectedGraph, values, signed: bool = False):
        vals = np.asarray(values, dtype=float).copy()
        if vals.shape != (graph.n_edges,):
            raise ValueError(
                f"metric needs {graph.n_edges} entries, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("metric entries must be finite")
        if not signed and np.any(vals < 0):
            raise ValueError("nonnegative metric has a negative entry")
        vals.flags.writeable = False
        self.graph = graph
        self.values = vals
        self.signed = bool(signed)

    @classmethod
    def of(cls, graph: DirectedGraph, by_edge: dict, default: float = 0.0, signed=False):
        vals = np.full(graph.n_edges, float(default))
        for e, v in by_edge.items():
            vals[graph.edge_id(e)] = v
        return cls(graph, vals, signed=signed)

    @classmethod
    def constant(cls, graph: DirectedGraph, value: float = 1.0):
        return cls(graph, np.full(graph.n_edges, float(value)))

    def __getitem__(self, edge):
        if isinstance(edge, (int, np.integer)):
            return float(self.values[edge])
        return float(self.values[self.graph.edge_id(edge)])

    def __repr__(self):
        kind = "signed" if self.signed else "nonnegative"
        return f"Metric({kind}, {self.values!r})"


def _path_edge_ids(graph: DirectedGraph, path: Path) -> tuple:
    """Edge ids of ``path`` in ``graph``, re-validating when graphs differ."""
    if path.graph is graph or path.graph == graph:
        return path.edge_ids
    ids = []
    for e in path.edge_seq:
        if e not in graph.edge_index:
            raise InvalidPathError(f"edge {e} of the path is missing from the graph")
        ids.append(graph.edge_index[e])
    return tuple(ids)


def path_length(metric: Metric, path: Path) -> float:
    """Total metric length of a path, counting repeated edges with multiplicity."""
    ids = _path_edge_ids(metric.graph, path)
    if not ids:
        return 0.0
    return float(metric.values[list(ids)].sum())


def _bellman_ford(graph: DirectedGraph, w: np.ndarray, dist0: np.ndarray):
    """Label-correcting passes; returns final labels and whether they still improve.

    Runs up to ``2 n`` synchronous passes. With a negative loop present the
    labels keep improving and the caller recovers a witness; marginal loops
    (within the loop tolerance) leave labels within ``2 n * tol`` of exact.
    """
    dist = dist0.astype(float).copy()
    tails, heads = graph.tail_idx, graph.head_idx
    if graph.n_edges == 0 or graph.n_nodes == 0:
        return dist, False
    for _ in range(2 * graph.n_nodes):
        cand = dist[tails] + w
        new = dist.copy()
        np.minimum.at(new, heads, cand)
        if not np.any(new < dist):
            return dist, False
        dist = new
    improving = bool(np.any(dist[tails] + w < dist[heads]))
    return dist, improving


def _predecessors(graph: DirectedGraph, w: np.ndarray, dist: np.ndarray):
    """Best incoming edge per node under the current labels (ties: lowest id)."""
    pred = [-1] * graph.n_nodes
    best = [math.inf] * graph.n_nodes
    for eid in range(graph.n_edges):
        t = graph.tail_idx[eid]
        h = graph.head_idx[eid]
        if not math.isfinite(dist[t]):
            continue
        c = dist[t] + w[eid]
        if c < best[h]:
            best[h] = c
            pred[h] = eid
    return pred


def _recover_loops(graph: DirectedGraph, w: np.ndarray, dist: np.ndarray):
    """Candidate loops from the predecessor structure, with their totals."""
    pred = _predecessors(graph, w, dist)
    tails, heads = graph.tail_idx, graph.head_idx
    starts = [
        int(heads[eid])
        for eid in range(graph.n_edges)
        if math.isfinite(dist[tails[eid]]) and dist[tails[eid]] + w[eid] < dist[heads[eid]]
    ]
    loops = {}
    for s in starts:
        x = s
        for _ in range(graph.n_nodes):
            if pred[x] < 0:
                break
            x = int(tails[pred[x]])
        # walk again collecting the cycle through x, if any
        seen = {}
        cur = x
        chain = []
        while pred[cur] >= 0 and cur not in seen:
            seen[cur] = len(chain)
            chain.append(pred[cur])
            cur = int(tails[pred[cur]])
        if pred[cur] < 0 or cur not in seen:
            continue
        cycle_eids = list(reversed(chain[seen[cur]:]))
        key = frozenset(cycle_eids)
        if key in loops:
            continue
        nodes = [graph.nodes[cur]]
        for eid in cycle_eids:
            nodes.append(graph.nodes[int(heads[eid])])
        total = float(w[list(cycle_eids)].sum())
        loops[key] = (total, Path(graph, tuple(nodes)))
    return sorted(loops.values(), key=lambda p: p[0])


class ShortestDistances:
    """Distances from a source set plus the tight-edge (geodesic) structure."""

    __slots__ = ("graph", "metric", "sources", "dist", "tight", "_hops")

    def __init__(self, graph, metric, sources, dist, tight):
        self.graph = graph
        self.metric = metric
        self.sources = tuple(sources)
        self.dist = dist
        self.tight = tight
        self._hops = None

    def distance(self, node) -> float:
        return float(self.dist[self.graph.index(node)])

    def distance_map(self) -> dict:
        return {x: float(self.dist[k]) for k, x in enumerate(self.graph.nodes)}

    def geodesic_edges(self) -> tuple:
        """All edges e with d(tail) + xi(e) = d(head), within tolerance."""
        return tuple(int(k) for k in np.flatnonzero(self.tight))

    def _hop_levels(self):
        if self._hops is not None:
            return self._hops
        g = self.graph
        hops = np.full(g.n_nodes, -1, dtype=int)
        frontier = sorted(
            g.index(s) for s in self.sources if self.dist[g.index(s)] >= -GEO_TOL
        )
        for k in frontier:
            hops[k] = 0
        level = 0
        while frontier:
            nxt = set()
            for x in frontier:
                for eid in g.out_edges(x):
                    if self.tight[eid]:
                        h = int(g.head_idx[eid])
                        if hops[h] < 0:
                            nxt.add(h)
            level += 1
            frontier = sorted(nxt)
            for k in frontier:
                hops[k] = level
        self._hops = hops
        return hops

    def trace_geodesic(self, target):
        """One geodesic from the source set to ``target``.

        Follows tight edges backwards, among ties preferring the fewest hops
        and then the smallest tail index, so the result is reproducible.
        Returns None when the target is unreachable.
        """
        g = self.graph
        ti = g.index(target)
        if not math.isfinite(self.dist[ti]):
            return None
        hops = self._hop_levels()
        if hops[ti] < 0:
            raise RuntimeError("tight-edge structure does not reach the target")
        seq = [ti]
        cur = ti
        while hops[cur] > 0:
            best = None
            for eid in g.in_edges(cur):
                if self.tight[eid]:
                    t = int(g.tail_idx[eid])
                    if hops[t] == hops[cur] - 1 and (best is None or t < best):
                        best = t
            if best is None:
                raise RuntimeError("tight-edge structure does not reach the target")
            seq.append(best)
            cur = best
        return Path(g, tuple(g.nodes[k] for k in reversed(seq)))


def shortest_distances(
    graph: DirectedGraph,
    metric: Metric,
    sources: Iterable[NodeId],
    *,
    loop_tol: float = LOOP_TOL,
    geo_tol: float = GEO_TOL,
) -> ShortestDistances:
    """Multi-source shortest distances under a possibly signed metric.

    Unreachable nodes get distance +inf. A loop with total length below
    ``-loop_tol`` reachable from the sources raises NegativeLoopError with a
    witness loop.
    """
    src = tuple(sources)
    if not src:
        raise ValueError("source set must be nonempty")
    dist0 = np.full(graph.n_nodes, math.inf)
    for s in src:
        dist0[graph.index(s)] = 0.0
    w = metric.values
    dist, improving = _bellman_ford(graph, w, dist0)
    if improving:
        cands = _recover_loops(graph, w, dist)
        if cands and cands[0][0] < -loop_tol:
            raise NegativeLoopError(cands[0][1], cands[0][0])
    tails, heads = graph.tail_idx, graph.head_idx
    if graph.n_edges:
        with np.errstate(invalid="ignore"):
            tight = (
                np.isfinite(dist[tails])
                & np.isfinite(dist[heads])
                & (np.abs(dist[tails] + w - dist[heads]) <= geo_tol)
            )
    else:
        tight = np.zeros(0, dtype=bool)
    return ShortestDistances(graph, metric, src, dist, tight)


def geodesic_check(
    graph: DirectedGraph, metric: Metric, path: Path, *, tol: float = GEO_TOL
) -> bool:
    """True iff the path realizes the distance between its endpoints."""
    length = path_length(metric, path)
    sd = shortest_distances(graph, metric, [path.start], geo_tol=tol)
    return abs(length - sd.distance(path.end)) <= tol


def enumerate_simple_paths(graph: DirectedGraph, x: NodeId, y: NodeId) -> list:
    """All loop-free paths from x to y, in deterministic DFS order.

    Exhaustive search: exponential in the number of nodes, intended for
    desk-scale graphs and as a brute-force oracle.
    """
    xi, yi = graph.index(x), graph.index(y)
    out: list[Path] = []
    if xi == yi:
        return [Path(graph, (x,))]
    seq = [xi]
    on_path = {xi}

    def dfs(cur: int):
        for eid in graph.out_edges(cur):
            h = int(graph.head_idx[eid])
            if h in on_path:
                continue
            seq.append(h)
            if h == yi:
                out.append(Path(graph, tuple(graph.nodes[k] for k in seq)))
            else:
                on_path.add(h)
                dfs(h)
                on_path.remove(h)
            seq.pop()

    dfs(xi)
    return out


@dataclass(frozen=True)
class LoopCheckResult:
    ok: bool
    witness: Path | None = None
    total: float | None = None

    def __bool__(self):
        return self.ok


def nonneg_loop_check(
    graph: DirectedGraph, metric: Metric, *, tol: float = LOOP_TOL
) -> LoopCheckResult:
    """Whether every loop has total length >= -tol; returns a witness otherwise."""
    if graph.n_edges == 0:
        return LoopCheckResult(True)
    dist0 = np.zeros(graph.n_nodes)
    dist, improving = _bellman_ford(graph, metric.values, dist0)
    if not improving:
        return LoopCheckResult(True)
    cands = _recover_loops(graph, metric.values, dist)
    if cands and cands[0][0] < -tol:
        total, loop = cands[0]
        return LoopCheckResult(False, loop, total)
    return LoopCheckResult(True)


def potential_from_metric(
    graph: DirectedGraph, metric: Metric, *, tol: float = LOOP_TOL
) -> np.ndarray:
    """A node potential u with Du <= xi, built from all-source distances.

    u(x) is the least distance from any node to x, so u <= 0 everywhere.
    Requires the nonnegative-loop condition; raises NegativeLoopError
    otherwise. Returns the potential as a node-indexed array.
    """
    check = nonneg_loop_check(graph, metric, tol=tol)
    if not check.ok:
        raise NegativeLoopError(check.witness, check.total)
    dist0 = np.zeros(graph.n_nodes)
    dist, _ = _bellman_ford(graph, metric.values, dist0)
    return dist


def symmetrize(graph: DirectedGraph, over: Iterable, metric: Metric, *, tol: float = LOOP_TOL):
    """Graph and metric augmented with reversed edges carrying negated values.

    ``over`` lists edges (or edge ids) whose reversals are forced: the
    reversed edge gets value ``-xi(e)``; when the reversed edge already
    exists its value is tightened to ``min(existing, -xi(e))`` so that both
    inequality constraints survive on a simple graph. Requires the metric to
    be odd over ``over`` wherever both orientations lie in the set.
    """
    ids = []
    seen = set()
    for item in over:
        eid = item if isinstance(item, (int, np.integer)) else graph.edge_id(item)
        eid = int(eid)
        if eid not in seen:
            seen.add(eid)
            ids.append(eid)
    ids.sort()
    id_set = set(ids)
    for eid in ids:
        rid = graph.reverse_edge_id(eid)
        if rid is not None and rid in id_set and rid > eid:
            if abs(metric.values[eid] + metric.values[rid]) > tol:
                raise OddnessError(
                    graph.edges[eid],
                    graph.edges[rid],
                    (float(metric.values[eid]), float(metric.values[rid])),
                )
    new_edges = []
    for eid in ids:
        rev = (graph.edges[eid][1], graph.edges[eid][0])
        if rev not in graph.edge_index:
            new_edges.append((rev, -float(metric.values[eid])))
    sym_graph = DirectedGraph(graph.nodes, graph.edges + tuple(e for e, _ in new_edges))
    vals = np.empty(sym_graph.n_edges)
    vals[: graph.n_edges] = metric.values
    for k, (_, v) in enumerate(new_edges):
        vals[graph.n_edges + k] = v
    for eid in ids:
        rev = (graph.edges[eid][1], graph.edges[eid][0])
        rid = graph.edge_index.get(rev)
        if rid is not None:
            vals[rid] = min(vals[rid], -float(metric.values[eid]))
    return sym_graph, Metric(sym_graph, vals, signed=True)


def _simple_paths_within(graph: DirectedGraph, allowed: set):
    """All nontrivial simple paths using only the allowed edge ids."""
    out = []
    for start in range(graph.n_nodes):
        seq = [start]
        on_path = {start}

        def dfs(cur):
            for eid in graph.out_edges(cur):
                if eid not in allowed:
                    continue
                h = int(graph.head_idx[eid])
                if h in on_path:
                    continue
                seq.append(h)
                out.append(tuple(seq))
                on_path.add(h)
                dfs(h)
                on_path.remove(h)
                seq.pop()

        dfs(start)
    return out


def inner_diameter(
    graph: DirectedGraph, metric: Metric, edges: Iterable, *, tol: float = GEO_TOL
) -> float:
    """Largest length of a geodesic supported inside the given edge set.

    Brute force over simple paths within the set, each certified against the
    full-graph distance; 0 when the set supports no nontrivial geodesic.
    """
    allowed = set()
    for item in edges:
        eid = item if isinstance(item, (int, np.integer)) else graph.edge_id(item)
        allowed.add(int(eid))
    if not allowed:
        return 0.0
    best = 0.0
    sd_cache: dict[int, ShortestDistances] = {}
    for seq in _simple_paths_within(graph, allowed):
        start = seq[0]
        if start not in sd_cache:
            sd_cache[start] = shortest_distances(
                graph, metric, [graph.nodes[start]], geo_tol=tol
            )
        length = float(metric.values[
            [graph.edge_index[(graph.nodes[a], graph.nodes[b])] for a, b in zip(seq, seq[1:])]
        ].sum())
        if abs(length - sd_cache[start].dist[seq[-1]]) <= tol:
            best = max(best, length)
    return best


def diameter(
    graph: DirectedGraph, metric: Metric, from_nodes: Iterable, to_nodes: Iterable
) -> float:
    """Largest distance from one node set to another; 0 when either is empty."""
    a = tuple(from_nodes)
    b = tuple(to_nodes)
    if not a or not b:
        return 0.0
    best = -math.inf
    for x in a:
        sd = shortest_distances(graph, metric, [x])
        for y in b:
            best = max(best, sd.distance(y))
    return best
