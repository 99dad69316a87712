"""Constructive decomposition of balanced flows into path profiles.

The decomposition peels mass along walks from excess nodes to deficit nodes,
removing any loop encountered on the way (loop mass is left behind in the
residual). Each peel zeroes an edge, a source, or a sink, so the number of
outer steps is bounded by the size of the flow's support plus the supports
of the divergence parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DecompositionStalledError, PreconditionError
from .flows import (
    EdgeFlow,
    NodeMeasure,
    PathProfile,
    divergence,
    edge_flow,
    expected_length,
    loop_erasure,
    path_length,
)
from .graph import GEO_TOL, DirectedGraph, Metric, Path, shortest_distances

POS_TOL = 1e-12


def _walk_to_sink(graph: DirectedGraph, work: np.ndarray, sinks: np.ndarray, start: int, tol: float):
    """Node-index walk from ``start`` into ``sinks`` over edges with work > tol.

    Loops found along the way are peeled out of ``work`` in place (their
    divergence is zero, so the walk invariants survive). Among admissible
    next edges the smallest edge id wins.
    """
    stack_nodes = [start]
    stack_edges: list[int] = []
    pos = {start: 0}
    guard = graph.n_edges + 1
    for _ in range((graph.n_nodes + 1) * guard):
        cur = stack_nodes[-1]
        nxt_eid = -1
        for eid in graph.out_edges(cur):
            if work[eid] > tol:
                nxt_eid = eid
                break
        if nxt_eid < 0:
            raise DecompositionStalledError(
                f"no positive edge leaves node {graph.nodes[cur]!r} during decomposition"
            )
        head = int(graph.head_idx[nxt_eid])
        if head in pos:
            loop_eids = stack_edges[pos[head]:] + [nxt_eid]
            m = float(work[loop_eids].min()) if loop_eids else 0.0
            work[loop_eids] -= m
            near_zero = [eid for eid in loop_eids if work[eid] <= tol]
            work[near_zero] = 0.0
            for dropped in stack_nodes[pos[head] + 1:]:
                del pos[dropped]
            del stack_nodes[pos[head] + 1:]
            del stack_edges[pos[head]:]
            continue
        stack_nodes.append(head)
        stack_edges.append(nxt_eid)
        pos[head] = len(stack_nodes) - 1
        if sinks[head]:
            return stack_nodes, stack_edges
    raise DecompositionStalledError("walk failed to terminate")


def positive_path_to_sink(flow: EdgeFlow, x, *, tol: float = POS_TOL) -> Path:
    """A path from ``x`` into the deficit set using only positive-flow edges.

    ``x`` must carry positive divergence and the deficit set must be
    nonempty; the walk peels loops from a private copy of the flow.
    """
    g = flow.graph
    div = divergence(flow).values
    xi = g.index(x)
    if div[xi] <= tol:
        raise PreconditionError(f"node {x!r} does not carry positive divergence")
    sinks = div < -tol
    if not sinks.any():
        raise PreconditionError("the flow has no deficit nodes")
    work = flow.values.copy()
    work[work <= tol] = 0.0
    nodes, _ = _walk_to_sink(g, work, sinks, xi, tol)
    return Path(g, tuple(g.nodes[k] for k in nodes))


def smirnov_decompose(flow: EdgeFlow, *, tol: float = POS_TOL) -> PathProfile:
    """A path profile q with plan marginals (div i)+/(div i)- and i[q] <= i.

    Requires both divergence parts to be probability measures. The result is
    supported on simple paths and is deterministic (smallest-index choices
    throughout).
    """
    g = flow.graph
    work = flow.values.copy()
    work[work <= tol] = 0.0
    div = divergence(EdgeFlow(g, work)).values
    mu = np.maximum(div, 0.0)
    nu = np.maximum(-div, 0.0)
    mu[mu <= tol] = 0.0
    nu[nu <= tol] = 0.0
    if abs(mu.sum() - 1.0) > 1e-9 or abs(nu.sum() - 1.0) > 1e-9:
        raise PreconditionError(
            "divergence parts are not probability measures: "
            f"sums {mu.sum():.12g} / {nu.sum():.12g}"
        )
    atoms: dict[Path, float] = {}
    for _ in range(g.n_edges + 2 * g.n_nodes + 1):
        srcs = np.flatnonzero(mu > 0.0)
        if srcs.size == 0:
            break
        start = int(srcs[0])
        sinks = nu > 0.0
        if not sinks.any():
            raise DecompositionStalledError("sources remain but every sink is exhausted")
        nodes, eids = _walk_to_sink(g, work, sinks, start, tol)
        end = nodes[-1]
        m = min(float(mu[start]), float(nu[end]), float(work[eids].min()))
        if m <= tol:
            raise DecompositionStalledError(f"peel mass {m:.3g} fell below the threshold")
        work[eids] -= m
        zeroed = [eid for eid in eids if work[eid] <= tol]
        work[zeroed] = 0.0
        mu[start] -= m
        nu[end] -= m
        if mu[start] <= tol:
            mu[start] = 0.0
        if nu[end] <= tol:
            nu[end] = 0.0
        path = Path(g, tuple(g.nodes[k] for k in nodes))
        atoms[path] = atoms.get(path, 0.0) + m
    else:
        raise DecompositionStalledError("decomposition exceeded its step bound")
    return loop_erasure(PathProfile.normalized(g, atoms))


@dataclass
class WardropPathRow:
    path: Path
    weight: float
    length: float
    distance: float


@dataclass
class WardropReport:
    """Equilibrium certificate for a profile under a congestion-induced metric."""

    gap: float
    rows: list
    equilibrium: bool
    metric: Metric = field(repr=False)

    def to_json(self) -> dict:
        return {
            "gap": self.gap,
            "equilibrium": self.equilibrium,
            "paths": [
                {
                    "path": list(r.path.nodes),
                    "weight": r.weight,
                    "length": r.length,
                    "distance": r.distance,
                }
                for r in self.rows
            ],
        }


def wardrop_certificate(
    q: PathProfile,
    cost: Callable[[EdgeFlow], Metric],
    *,
    tol: float = GEO_TOL,
) -> WardropReport:
    """Check that every support path is a geodesic for the induced metric.

    ``cost`` maps the profile's edge flow to the metric it generates. The
    reported gap is E_q[length] - E_plan[distance] >= 0; the profile is an
    equilibrium exactly when the gap vanishes (within ``tol``).
    """
    g = q.graph
    metric = cost(edge_flow(q))
    sd_cache = {}
    rows = []
    gap_terms = []
    for path, w in q.items():
        if path.start not in sd_cache:
            sd_cache[path.start] = shortest_distances(g, metric, [path.start])
        length = path_length(metric, path)
        dist = sd_cache[path.start].distance(path.end)
        rows.append(WardropPathRow(path, w, length, dist))
        gap_terms.append(w * (length - dist))
    gap = math.fsum(gap_terms)
    return WardropReport(gap=gap, rows=rows, equilibrium=gap <= tol, metric=metric)
