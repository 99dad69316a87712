"""Time-layered graphs and the flow problems solved over them.

A horizon-T extension replicates the node set at times 0..T and turns each
base edge into T copies joining consecutive layers. The deposit variant adds
one extra copy of every node plus zero-cost edges from each positive time,
so transport may finish at any intermediate step. Node and edge layout is
time-major and documented so flows round-trip through CSV deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .beckmann import SolveOptions, SolverResult, solve_beckmann_frank_wolfe
from .constraints import FixedMeasure
from .errors import PreconditionError
from .flows import EdgeFlow, NodeFunction, NodeMeasure, divergence, gradient
from .graph import (
    LOOP_TOL,
    DirectedGraph,
    Metric,
    diameter,
    nonneg_loop_check,
    shortest_distances,
    symmetrize,
)
from .potentials import Potential, TimeExtended

OMEGA = "omega"

FLOW_TOL = 1e-12


class TimeExtendedGraph:
    """A base graph replicated over discrete times 0..T, optionally with deposits."""

    __slots__ = ("base", "horizon", "deposit", "graph")

    def __init__(self, base: DirectedGraph, horizon: int, deposit: bool = True):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.base = base
        self.horizon = int(horizon)
        self.deposit = bool(deposit)
        nodes = [(x, t) for t in range(horizon + 1) for x in base.nodes]
        edges = [
            ((e[0], t - 1), (e[1], t)) for t in range(1, horizon + 1) for e in base.edges
        ]
        if deposit:
            nodes += [(x, OMEGA) for x in base.nodes]
            edges += [
                ((x, t), (x, OMEGA)) for t in range(1, horizon + 1) for x in base.nodes
            ]
        self.graph = DirectedGraph(nodes, edges)

    @property
    def n_transit_edges(self) -> int:
        return self.base.n_edges * self.horizon

    @property
    def n_deposit_edges(self) -> int:
        return self.base.n_nodes * self.horizon if self.deposit else 0

    def node_at(self, x, t) -> tuple:
        return (x, t)

    def deposit_node(self, x) -> tuple:
        return (x, OMEGA)

    def transit_edge_id(self, base_edge, t: int) -> int:
        if not 1 <= t <= self.horizon:
            raise ValueError(f"time {t} outside 1..{self.horizon}")
        return (t - 1) * self.base.n_edges + self.base.edge_id(base_edge)

    def deposit_edge_id(self, x, t: int) -> int:
        if not self.deposit:
            raise ValueError("graph has no deposit layer")
        if not 1 <= t <= self.horizon:
            raise ValueError(f"time {t} outside 1..{self.horizon}")
        return self.n_transit_edges + (t - 1) * self.base.n_nodes + self.base.index(x)

    def transit_view(self, edge_values: np.ndarray) -> np.ndarray:
        """Transit entries reshaped to (T, n_base_edges); row t-1 is time t."""
        return edge_values[: self.n_transit_edges].reshape(
            self.horizon, self.base.n_edges
        )

    def deposit_view(self, edge_values: np.ndarray) -> np.ndarray:
        if not self.deposit:
            return np.zeros((0, self.base.n_nodes))
        return edge_values[self.n_transit_edges:].reshape(
            self.horizon, self.base.n_nodes
        )

    def interior_node_ids(self) -> list:
        """Dense node ids of the layers 1..T (conservation holds there)."""
        n = self.base.n_nodes
        return list(range(n, n * (self.horizon + 1)))

    def __repr__(self):
        dep = "with deposit" if self.deposit else "no deposit"
        return f"TimeExtendedGraph(T={self.horizon}, {dep}, base={self.base!r})"


def extend_graph(base: DirectedGraph, horizon: int, deposit: bool = True) -> TimeExtendedGraph:
    """Replicate a graph over a discrete horizon; see TimeExtendedGraph."""
    return TimeExtendedGraph(base, horizon, deposit)


class StationaryFamily:
    """The same base potential at every time step."""

    __slots__ = ("base",)

    def __init__(self, base: Potential):
        self.base = base

    def at(self, t: int) -> Potential:
        return self.base


def _as_family(H_t):
    if hasattr(H_t, "at"):
        return H_t
    if callable(H_t):
        class _CallableFamily:
            def at(self, t, _f=H_t):
                return _f(t)

        return _CallableFamily()
    return StationaryFamily(H_t)


def lift_measures(ext: TimeExtendedGraph, mu: NodeMeasure, nu: NodeMeasure):
    """Place mu on the time-0 layer and nu on the deposit layer."""
    if not ext.deposit:
        raise ValueError("deposit layer required to lift the target measure")
    g = ext.graph
    mu_vals = np.zeros(g.n_nodes)
    nu_vals = np.zeros(g.n_nodes)
    for k, x in enumerate(ext.base.nodes):
        mu_vals[g.index((x, 0))] = mu.values[k]
        nu_vals[g.index((x, OMEGA))] = nu.values[k]
    return NodeMeasure(g, mu_vals), NodeMeasure(g, nu_vals)


def extend_potential(ext: TimeExtendedGraph, H_t) -> TimeExtended:
    """Stack per-time potentials over the transit layers; deposits cost nothing."""
    family = _as_family(H_t)
    layers = [family.at(t) for t in range(1, ext.horizon + 1)]
    for p in layers:
        if p.n_edges != ext.base.n_edges:
            raise ValueError("layer potential does not match the base edge count")
    return TimeExtended(layers, n_deposit_edges=ext.n_deposit_edges)


@dataclass
class DynamicSolution:
    ext: TimeExtendedGraph
    potential: TimeExtended
    result: SolverResult

    @property
    def flow(self) -> EdgeFlow:
        return self.result.flow

    def flow_at(self, t: int) -> np.ndarray:
        return self.ext.transit_view(self.flow.values)[t - 1].copy()

    def deposit_at(self, t: int) -> np.ndarray:
        return self.ext.deposit_view(self.flow.values)[t - 1].copy()

    def interior_conservation_residual(self) -> float:
        div = divergence(self.flow).values
        ids = self.ext.interior_node_ids()
        return float(np.abs(div[ids]).max()) if ids else 0.0

    def total_mass_by_time(self) -> np.ndarray:
        """Transit mass per time step; non-increasing for conserved solutions."""
        return self.ext.transit_view(self.flow.values).sum(axis=1)


def solve_dynamic(
    base: DirectedGraph,
    H_t,
    mu: NodeMeasure,
    nu: NodeMeasure,
    horizon: int,
    opts: SolveOptions | None = None,
) -> DynamicSolution:
    """Solve the horizon-T flow problem carrying mu (time 0) to nu (deposit).

    Infeasible when some demand pair needs more than T hops. Interior layers
    conserve mass up to the solver tolerance.
    """
    ext = extend_graph(base, horizon, deposit=True)
    mu_l, nu_l = lift_measures(ext, mu, nu)
    constraint = FixedMeasure(mu_l - nu_l)
    H = extend_potential(ext, H_t)
    result = solve_beckmann_frank_wolfe(ext.graph, H, constraint, opts)
    return DynamicSolution(ext=ext, potential=H, result=result)


def active_horizon(ext: TimeExtendedGraph, flow: EdgeFlow, *, tol: float = FLOW_TOL) -> int:
    """Last time layer whose transit flow is not identically zero (0 if none)."""
    layers = ext.transit_view(flow.values)
    active = np.flatnonzero((layers > tol).any(axis=1))
    return int(active[-1] + 1) if active.size else 0


@dataclass
class FinitePropagationReport:
    t_active: int
    bound: float
    hypothesis_met: bool
    holds: bool | None
    gradient_min: float
    gradient_max: float
    demand_diameter: float

    def to_json(self) -> dict:
        return {
            "t_active": self.t_active,
            "bound": self.bound,
            "hypothesis_met": self.hypothesis_met,
            "holds": self.holds,
            "gradient_min": self.gradient_min,
            "gradient_max": self.gradient_max,
            "demand_diameter": self.demand_diameter,
        }


def finite_propagation_report(
    ext: TimeExtendedGraph,
    flow: EdgeFlow,
    mu: NodeMeasure,
    nu: NodeMeasure,
    grad_min: float,
    grad_max: float,
    *,
    tol: float = FLOW_TOL,
) -> FinitePropagationReport:
    """Check the active horizon against (max/min marginal cost) * demand diameter.

    ``grad_min``/``grad_max`` bound the marginal costs over unit-box flows;
    with ``grad_min <= 0`` the bound is vacuous and reported as hypothesis
    unmet rather than asserted.
    """
    t0 = active_horizon(ext, flow, tol=tol)
    ones = Metric(ext.base, np.ones(ext.base.n_edges))
    dem_diam = diameter(ext.base, ones, mu.support(), nu.support())
    hypothesis = grad_min > 0 and math.isfinite(dem_diam) and ext.horizon >= dem_diam
    bound = (grad_max / grad_min) * dem_diam if grad_min > 0 else math.inf
    holds = bool(t0 <= bound + 1e-12) if hypothesis else None
    return FinitePropagationReport(
        t_active=t0,
        bound=bound,
        hypothesis_met=hypothesis,
        holds=holds,
        gradient_min=grad_min,
        gradient_max=grad_max,
        demand_diameter=dem_diam,
    )


@dataclass
class ZeroExtensionReport:
    ok: bool
    stage: str
    min_margin: float
    witness: object = None

    def __bool__(self):
        return self.ok

    def to_json(self) -> dict:
        out = {"ok": self.ok, "stage": self.stage, "min_margin": self.min_margin}
        if self.witness is not None:
            out["witness"] = [list(n) for n in self.witness.nodes] if hasattr(
                self.witness, "nodes"
            ) else self.witness
        return out


def zero_extension_check(
    ext: TimeExtendedGraph,
    flow: EdgeFlow,
    u: NodeFunction,
    H_t,
    *,
    pre_tol: float = 1e-6,
    support_tol: float = 1e-9,
) -> ZeroExtensionReport:
    """Whether the solution extends by zero to horizon T+1 and stays optimal.

    Two stages: first the cheap sufficient inequality
    cost_e(0, T+1) + u(tail, T) - u(head, deposit) >= 0 per base edge; when it
    fails, the exact criterion runs negative-cycle detection on an auxiliary
    two-layer digraph whose arcs carry zero-flow costs at T+1 and symmetrized
    deposit-to-layer-T distances. Requires (flow, u) to satisfy the layered
    optimality system within ``pre_tol``.
    """
    family = _as_family(H_t)
    g = ext.graph
    base = ext.base
    H = extend_potential(ext, family)
    cost = H.gradient(flow.values)
    du = gradient(u)
    resid = float(np.abs(np.minimum(flow.values, cost - du)).max()) if g.n_edges else 0.0
    ids = ext.interior_node_ids()
    div = divergence(flow).values
    cons = float(np.abs(div[ids]).max()) if ids else 0.0
    if max(resid, cons) > pre_tol:
        raise PreconditionError(
            f"(flow, u) violate the layered optimality system: residual {max(resid, cons):.3g}"
        )
    next_cost = family.at(ext.horizon + 1).gradient(np.zeros(base.n_edges))
    margins = []
    for eid, (x, y) in enumerate(base.edges):
        margins.append(
            float(next_cost[eid])
            + u[(x, ext.horizon)]
            - u[(y, OMEGA)]
        )
    min_margin = min(margins) if margins else 0.0
    if min_margin >= -LOOP_TOL:
        return ZeroExtensionReport(True, "sufficient", min_margin)

    support = [int(k) for k in np.flatnonzero(flow.values > support_tol)]
    metric = Metric(g, np.maximum(cost, 0.0))
    sym_graph, sym_metric = symmetrize(g, support, metric)
    aux_nodes = [("tail", x) for x in base.nodes] + [("head", x) for x in base.nodes]
    aux_edges = []
    aux_w = []
    for eid, (x, y) in enumerate(base.edges):
        aux_edges.append((("tail", x), ("head", y)))
        aux_w.append(float(next_cost[eid]))
    for y in base.nodes:
        sd = shortest_distances(sym_graph, sym_metric, [(y, OMEGA)])
        for x in base.nodes:
            d = sd.distance((x, ext.horizon))
            if math.isfinite(d):
                aux_edges.append((("head", y), ("tail", x)))
                aux_w.append(d)
    aux_graph = DirectedGraph(aux_nodes, aux_edges)
    aux_metric = Metric(aux_graph, np.array(aux_w), signed=True)
    check = nonneg_loop_check(aux_graph, aux_metric)
    if check.ok:
        return ZeroExtensionReport(True, "exact", min_margin)
    return ZeroExtensionReport(False, "exact", min_margin, witness=check.witness)
