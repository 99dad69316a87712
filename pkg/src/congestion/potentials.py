"""Congestion potentials: separable local costs, coupled quadratics, time-stacked sums.

Every potential exposes ``value`` and ``gradient`` over nonnegative edge
vectors; the gradient is the per-edge marginal cost used as the metric of
the induced geodesic problem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import DomainError, ModelViolationError
from .flows import EdgeFlow
from .graph import DirectedGraph, Metric

GRAD_TOL = 1e-9


class Potential(Protocol):
    n_edges: int

    def value(self, i: np.ndarray) -> float: ...

    def gradient(self, i: np.ndarray) -> np.ndarray: ...

    @property
    def is_quadratic(self) -> bool: ...

    @property
    def is_convex(self) -> bool: ...


class LocalSeparable:
    """Per-edge cost xi_e + a_e * x^(q-1) integrated edgewise."""

    __slots__ = ("graph", "xi", "a", "q")

    def __init__(self, graph: DirectedGraph, xi, a, q: float = 2.0):
        self.graph = graph
        self.xi = np.asarray(xi, dtype=float).copy()
        self.a = np.asarray(a, dtype=float).copy()
        self.q = float(q)
        if self.xi.shape != (graph.n_edges,) or self.a.shape != (graph.n_edges,):
            raise ValueError("coefficient arrays must have one entry per edge")
        if np.any(self.xi < 0) or np.any(self.a < 0):
            raise ValueError("cost coefficients must be nonnegative")
        if self.q <= 1:
            raise ValueError("exponent must exceed 1")

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges

    def value(self, i: np.ndarray) -> float:
        return float(np.dot(self.xi, i) + np.dot(self.a, np.power(i, self.q)) / self.q)

    def gradient(self, i: np.ndarray) -> np.ndarray:
        return self.xi + self.a * np.power(i, self.q - 1.0)

    @property
    def is_quadratic(self) -> bool:
        return self.q == 2.0

    @property
    def is_convex(self) -> bool:
        return True

    def to_json(self) -> dict:
        return {"kind": "local", "xi": list(self.xi), "a": list(self.a), "q": self.q}


class QuadraticForm:
    """H(i) = i'Qi/2 + c'i with symmetric Q; supports cross-edge coupling."""

    __slots__ = ("graph", "Q", "c", "_convex")

    def __init__(self, graph: DirectedGraph, Q, c):
        self.graph = graph
        self.Q = np.asarray(Q, dtype=float).copy()
        self.c = np.asarray(c, dtype=float).copy()
        n = graph.n_edges
        if self.Q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n}")
        if not np.allclose(self.Q, self.Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        if self.c.shape != (n,):
            raise ValueError("c must have one entry per edge")
        if np.any(self.c < 0):
            raise ValueError("linear costs must be nonnegative")
        self._convex = None

    @classmethod
    def from_triplets(cls, graph: DirectedGraph, triplets: Sequence, c) -> "QuadraticForm":
        n = graph.n_edges
        Q = np.zeros((n, n))
        for e1, e2, v in triplets:
            i = e1 if isinstance(e1, (int, np.integer)) else graph.edge_id(tuple(e1))
            j = e2 if isinstance(e2, (int, np.integer)) else graph.edge_id(tuple(e2))
            Q[int(i), int(j)] = v
            Q[int(j), int(i)] = v
        return cls(graph, Q, c)

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges

    def value(self, i: np.ndarray) -> float:
        return float(0.5 * i @ self.Q @ i + self.c @ i)

    def gradient(self, i: np.ndarray) -> np.ndarray:
        return self.Q @ i + self.c

    @property
    def is_quadratic(self) -> bool:
        return True

    @property
    def is_convex(self) -> bool:
        if self._convex is None:
            if self.graph.n_edges == 0:
                self._convex = True
            else:
                self._convex = bool(np.linalg.eigvalsh(self.Q).min() >= -1e-10)
        return self._convex

    def to_json(self) -> dict:
        triplets = [
            [int(i), int(j), float(v)]
            for (i, j), v in np.ndenumerate(self.Q)
            if v != 0.0 and i <= j
        ]
        return {"kind": "quadratic", "Q": triplets, "c": list(self.c)}


class TimeExtended:
    """Sum of per-time-step potentials on a time-layered edge vector.

    The edge layout is time-major: layer t (t = 1..T) occupies the block
    [(t-1)*E, t*E); any trailing entries are deposit edges with zero cost.
    """

    __slots__ = ("layers", "n_base_edges", "n_deposit_edges")

    def __init__(self, layers: Sequence, n_deposit_edges: int = 0):
        self.layers = tuple(layers)
        if not self.layers:
            raise ValueError("need at least one time layer")
        self.n_base_edges = self.layers[0].n_edges
        if any(p.n_edges != self.n_base_edges for p in self.layers):
            raise ValueError("all layers must share the base edge count")
        self.n_deposit_edges = int(n_deposit_edges)

    @property
    def horizon(self) -> int:
        return len(self.layers)

    @property
    def n_edges(self) -> int:
        return self.n_base_edges * len(self.layers) + self.n_deposit_edges

    def _layer_block(self, i: np.ndarray, t: int) -> np.ndarray:
        e = self.n_base_edges
        return i[(t - 1) * e: t * e]

    def value(self, i: np.ndarray) -> float:
        return float(
            sum(p.value(self._layer_block(i, t + 1)) for t, p in enumerate(self.layers))
        )

    def gradient(self, i: np.ndarray) -> np.ndarray:
        out = np.zeros_like(i)
        e = self.n_base_edges
        for t, p in enumerate(self.layers):
            out[t * e: (t + 1) * e] = p.gradient(i[t * e: (t + 1) * e])
        return out

    @property
    def is_quadratic(self) -> bool:
        return all(p.is_quadratic for p in self.layers)

    @property
    def is_convex(self) -> bool:
        return all(p.is_convex for p in self.layers)


def potential_gradient(H, flow: EdgeFlow, *, tol: float = GRAD_TOL) -> Metric:
    """Marginal-cost metric of a potential at a flow.

    A gradient entry below ``-tol`` means the model's nonnegative-cost
    hypothesis fails at this flow and raises ModelViolationError; entries in
    ``[-tol, 0)`` are clamped to zero.
    """
    if H.n_edges != flow.graph.n_edges:
        raise ValueError("potential and flow have mismatched edge counts")
    g = H.gradient(flow.values)
    worst = g.min() if g.size else 0.0
    if worst < -tol:
        raise ModelViolationError(
            f"marginal cost {worst:.6g} is negative at the current flow"
        )
    return Metric(flow.graph, np.maximum(g, 0.0))


def legendre_flow(H: LocalSeparable, metric: Metric) -> EdgeFlow:
    """Edgewise inverse of a strictly increasing separable cost.

    Returns the flow whose marginal cost matches the metric where that is
    attainable, and zero where the metric sits below the zero-flow cost.
    """
    if not isinstance(H, LocalSeparable):
        raise DomainError("legendre_flow needs a separable local potential")
    if np.any(H.a <= 0):
        raise DomainError("every edge cost must be strictly increasing (a > 0)")
    xi = metric.values
    excess = xi - H.xi
    vals = np.where(
        excess > 0.0,
        np.power(np.maximum(excess, 0.0) / H.a, 1.0 / (H.q - 1.0)),
        0.0,
    )
    return EdgeFlow(metric.graph, vals)
