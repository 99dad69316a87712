"""Flow optimization over divergence constraints, with optimality diagnostics.

The solver is Frank-Wolfe: each iteration prices the edges by the marginal
cost at the current flow, answers the linearized problem with an
all-or-nothing geodesic assignment, and moves by exact (or golden-section)
line search. The linear subproblem for fixed demands is a tiny
transportation LP solved exactly, so the duality gap is a true optimality
certificate whenever the potential is convex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import Capacity, DivergenceConstraint, FixedMeasure, TargetSet
from .errors import InfeasibleError, ModelViolationError
from .flows import EdgeFlow, NodeFunction, divergence, gradient
from .graph import (
    LOOP_TOL,
    DirectedGraph,
    Metric,
    diameter,
    inner_diameter,
    nonneg_loop_check,
    potential_from_metric,
    shortest_distances,
    symmetrize,
)
from .transport_lp import solve_transportation

SUPPORT_TOL = 1e-9


@dataclass
class SolveOptions:
    tol: float = 1e-8
    max_iter: int = 10_000
    seed: int | None = None

    def to_json(self) -> dict:
        return {"tol": self.tol, "max_iter": self.max_iter, "seed": self.seed}


@dataclass
class SolverResult:
    flow: EdgeFlow
    gaps: list
    objective: float
    converged: bool
    n_iter: int
    certified_global: bool
    note: str | None = None

    @property
    def best_gap(self) -> float:
        return min(self.gaps) if self.gaps else math.inf


def _path_mass(graph: DirectedGraph, sd, target, mass: float, out: np.ndarray):
    path = sd.trace_geodesic(target)
    if path is None:
        raise InfeasibleError(f"no path reaches {target!r}")
    for eid in path.edge_ids:
        out[eid] += mass


def _all_or_nothing(graph: DirectedGraph, metric: Metric, constraint) -> np.ndarray:
    """Minimizer of the linearized cost over the constraint set."""
    s = np.zeros(graph.n_edges)
    if isinstance(constraint, FixedMeasure):
        f = constraint.f.values
        src = [k for k in range(graph.n_nodes) if f[k] > 0]
        dst = [k for k in range(graph.n_nodes) if f[k] < 0]
        sds = {k: shortest_distances(graph, metric, [graph.nodes[k]]) for k in src}
        cost = np.array([[sds[a].dist[b] for b in dst] for a in src])
        if np.isinf(cost.min(axis=1)).any() or np.isinf(cost.min(axis=0)).any():
            raise InfeasibleError("a demand atom cannot be routed: pair disconnected")
        plan = solve_transportation(f[src], -f[dst], cost)
        for ai, a in enumerate(src):
            for bi, b in enumerate(dst):
                if plan[ai, bi] > 0:
                    _path_mass(graph, sds[a], graph.nodes[b], plan[ai, bi], s)
        return s
    if isinstance(constraint, TargetSet):
        targets = sorted(graph.index(x) for x in constraint.targets)
        mu = constraint.mu.values
        for a in range(graph.n_nodes):
            if mu[a] <= 0 or graph.nodes[a] in constraint.targets:
                continue
            sd = shortest_distances(graph, metric, [graph.nodes[a]])
            best = min(targets, key=lambda b: (sd.dist[b], b))
            if not math.isfinite(sd.dist[best]):
                raise InfeasibleError(
                    f"source {graph.nodes[a]!r} cannot reach the target set"
                )
            _path_mass(graph, sd, graph.nodes[best], mu[a], s)
        return s
    if isinstance(constraint, Capacity):
        best = None
        for a in sorted(graph.index(x) for x in constraint.sources):
            sd = shortest_distances(graph, metric, [graph.nodes[a]])
            for b in sorted(graph.index(x) for x in constraint.sinks):
                d = sd.dist[b]
                if best is None or d < best[0]:
                    best = (d, a, b, sd)
        if best is None or not math.isfinite(best[0]):
            raise InfeasibleError("source and sink sets are disconnected")
        _path_mass(graph, best[3], graph.nodes[best[2]], 1.0, s)
        return s
    raise TypeError(f"unsupported constraint {type(constraint).__name__}")


def _golden_section(phi, lo: float, hi: float, tol: float = 1e-12) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = phi(c), phi(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = phi(d)
    return 0.5 * (a + b)


def _line_search(H, i: np.ndarray, s: np.ndarray, k: int) -> float:
    d = s - i
    if H.is_quadratic:
        g0 = H.gradient(i)
        der0 = float(g0 @ d)
        curv = float((H.gradient(i + d) - g0) @ d)
        if curv > 0:
            return min(1.0, max(0.0, -der0 / curv))
        # concave along the segment: the endpoint is at least as good
        return 1.0
    alpha = _golden_section(lambda a: H.value(i + a * d), 0.0, 1.0)
    if not math.isfinite(alpha):
        return 2.0 / (k + 2.0)
    return alpha


def solve_beckmann_frank_wolfe(
    graph: DirectedGraph,
    H,
    constraint: DivergenceConstraint,
    opts: SolveOptions | None = None,
) -> SolverResult:
    """Minimize the congestion potential over flows with constrained divergence.

    Returns the iterate with the smallest observed duality gap together with
    the full gap history. ``converged`` records whether the gap target was
    met; for non-convex quadratics the result is a stationary point and is
    flagged as not certified.
    """
    opts = opts or SolveOptions()
    quadratic_guard = getattr(H, "is_quadratic", False)

    def metric_at(flow_vals: np.ndarray) -> Metric:
        g = H.gradient(flow_vals)
        if quadratic_guard and g.size and g.min() < -1e-9:
            raise ModelViolationError(
                f"marginal cost {g.min():.6g} is negative along the solve"
            )
        return Metric(graph, np.maximum(g, 0.0))

    i = _all_or_nothing(graph, metric_at(np.zeros(graph.n_edges)), constraint)
    gaps: list[float] = []
    best_gap = math.inf
    best_flow = i
    converged = False
    n_iter = 0
    for k in range(opts.max_iter):
        n_iter = k + 1
        g = H.gradient(i)
        if quadratic_guard and g.size and g.min() < -1e-9:
            raise ModelViolationError(
                f"marginal cost {g.min():.6g} is negative along the solve"
            )
        s = _all_or_nothing(graph, Metric(graph, np.maximum(g, 0.0)), constraint)
        gap = float(g @ (i - s))
        gaps.append(gap)
        if gap < best_gap:
            best_gap = gap
            best_flow = i
        if gap <= opts.tol:
            converged = True
            break
        alpha = _line_search(H, i, s, k)
        i = (1.0 - alpha) * i + alpha * s
    certified = bool(getattr(H, "is_convex", False))
    note = None if certified else "stationary, not certified global"
    return SolverResult(
        flow=EdgeFlow(graph, best_flow),
        gaps=gaps,
        objective=float(H.value(best_flow)),
        converged=converged,
        n_iter=n_iter,
        certified_global=certified,
        note=note,
    )


@dataclass
class KKTReport:
    """Residuals of the complementarity system at a (flow, multiplier) pair."""

    constitutive: float
    divergence: float
    details: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.constitutive, self.divergence)

    def to_json(self) -> dict:
        return {
            "constitutive": self.constitutive,
            "divergence": self.divergence,
            "max_residual": self.max_residual,
            "details": self.details,
        }


def kkt_residual(flow: EdgeFlow, u: NodeFunction, H, constraint) -> KKTReport:
    """How far (flow, u) sits from the optimality system of the constrained problem.

    The constitutive part is max_e |min(i_e, cost_e - Du_e)]; the divergence
    part depends on the constraint family. Never raises: it reports.
    """
    g = flow.graph
    du = gradient(u)
    cost = H.gradient(flow.values)
    if g.n_edges:
        constitutive = float(np.abs(np.minimum(flow.values, cost - du)).max())
    else:
        constitutive = 0.0
    div = divergence(flow).values
    details: dict = {}
    if isinstance(constraint, FixedMeasure):
        div_res = float(np.abs(div - constraint.f.values).max())
        details["family"] = "fixed"
    elif isinstance(constraint, TargetSet):
        in_s = np.zeros(g.n_nodes, dtype=bool)
        for x in constraint.targets:
            in_s[g.index(x)] = True
        off = np.abs(div - constraint.mu.values)[~in_s]
        comp = np.abs(np.minimum(-div, u.values))[in_s]
        details["family"] = "target"
        details["off_target"] = float(off.max()) if off.size else 0.0
        details["complementarity"] = float(comp.max()) if comp.size else 0.0
        div_res = max(details["off_target"], details["complementarity"])
    elif isinstance(constraint, Capacity):
        s_minus = np.zeros(g.n_nodes, dtype=bool)
        s_plus = np.zeros(g.n_nodes, dtype=bool)
        for x in constraint.sources:
            s_minus[g.index(x)] = True
        for x in constraint.sinks:
            s_plus[g.index(x)] = True
        mid = ~(s_minus | s_plus)
        src_comp = np.abs(np.minimum(div, -u.values))[s_minus]
        snk_comp = np.abs(np.minimum(-div, u.values))[s_plus]
        details["family"] = "capacity"
        details["source_complementarity"] = float(src_comp.max()) if src_comp.size else 0.0
        details["sink_complementarity"] = float(snk_comp.max()) if snk_comp.size else 0.0
        details["interior"] = float(np.abs(div[mid]).max()) if mid.any() else 0.0
        details["unit_mass"] = abs(float(div[s_minus].sum()) - 1.0)
        div_res = max(
            details["source_complementarity"],
            details["sink_complementarity"],
            details["interior"],
            details["unit_mass"],
        )
    else:
        raise TypeError(f"unsupported constraint {type(constraint).__name__}")
    return KKTReport(constitutive=constitutive, divergence=div_res, details=details)


@dataclass
class MultiplierRecovery:
    found: bool
    u: NodeFunction | None = None
    reason: str | None = None
    witness: object = None

    def __bool__(self):
        return self.found

    def to_json(self) -> dict:
        out: dict = {"found": self.found}
        if self.u is not None:
            out["u"] = {x: float(v) for x, v in zip(self.u.graph.nodes, self.u.values)}
        if self.reason:
            out["reason"] = self.reason
        if self.witness is not None:
            w = self.witness
            out["witness"] = list(w.nodes) if hasattr(w, "nodes") else list(map(list, w))
        return out


def multiplier_recover(
    flow: EdgeFlow,
    metric: Metric,
    *,
    support_tol: float = SUPPORT_TOL,
    loop_tol: float = LOOP_TOL,
) -> MultiplierRecovery:
    """Try to build u with min(i, xi - Du) = 0 from the flow's support geometry.

    Works on the graph symmetrized over the support: the flow admits a
    multiplier exactly when the metric vanishes on two-way support pairs and
    the symmetrized metric has no negative loop. Returns the potential when
    it exists, or the failing certificate otherwise.
    """
    g = flow.graph
    if metric.signed and np.any(metric.values < 0):
        raise ValueError("multiplier recovery expects a nonnegative metric")
    support = [int(k) for k in np.flatnonzero(flow.values > support_tol)]
    sup_set = set(support)
    for eid in support:
        rid = g.reverse_edge_id(eid)
        if rid is not None and rid in sup_set and rid > eid:
            if metric.values[eid] > loop_tol or metric.values[rid] > loop_tol:
                return MultiplierRecovery(
                    False,
                    reason="metric is positive on a two-way support pair",
                    witness=(g.edges[eid], g.edges[rid]),
                )
    sym_graph, sym_metric = symmetrize(g, support, metric, tol=loop_tol)
    check = nonneg_loop_check(sym_graph, sym_metric, tol=loop_tol)
    if not check.ok:
        return MultiplierRecovery(
            False, reason="negative loop in the symmetrized metric", witness=check.witness
        )
    u_vals = potential_from_metric(sym_graph, sym_metric, tol=loop_tol)
    return MultiplierRecovery(True, u=NodeFunction(g, u_vals))


@dataclass
class SupportBoundReport:
    """Two-sided diameter bounds satisfied by flows meeting the optimality system."""

    in_diam_metric: float
    diam_metric: float
    metric_bound_holds: bool
    in_diam_hops: float
    hop_bound: float
    hop_bound_holds: bool | None
    metric_min: float
    metric_max: float
    hypothesis_met: bool

    def to_json(self) -> dict:
        return {
            "in_diam_metric": self.in_diam_metric,
            "diam_metric": self.diam_metric,
            "metric_bound_holds": self.metric_bound_holds,
            "in_diam_hops": self.in_diam_hops,
            "hop_bound": self.hop_bound,
            "hop_bound_holds": self.hop_bound_holds,
            "metric_min": self.metric_min,
            "metric_max": self.metric_max,
            "hypothesis_met": self.hypothesis_met,
        }


def support_bound_report(
    flow: EdgeFlow,
    metric: Metric,
    *,
    support_tol: float = SUPPORT_TOL,
    slack: float = 1e-9,
) -> SupportBoundReport:
    """Compare the support's inner diameter against the divergence diameter.

    Checks the metric-weighted bound and the hop-count bound scaled by
    max/min metric value. A violation falsifies the complementarity system
    for every multiplier, so this is a cheap necessary condition.
    """
    g = flow.graph
    support = [int(k) for k in np.flatnonzero(flow.values > support_tol)]
    div = divergence(flow).values
    plus = [g.nodes[k] for k in np.flatnonzero(div > support_tol)]
    minus = [g.nodes[k] for k in np.flatnonzero(div < -support_tol)]
    in_diam_metric = inner_diameter(g, metric, support)
    diam_metric = diameter(g, metric, plus, minus)
    ones = Metric(g, np.ones(g.n_edges))
    in_diam_hops = inner_diameter(g, ones, support)
    diam_hops = diameter(g, ones, plus, minus)
    m = float(metric.values.min()) if g.n_edges else 0.0
    M = float(metric.values.max()) if g.n_edges else 0.0
    hypothesis_met = m > 0
    hop_bound = (M / m) * diam_hops if hypothesis_met else math.inf
    return SupportBoundReport(
        in_diam_metric=in_diam_metric,
        diam_metric=diam_metric,
        metric_bound_holds=bool(in_diam_metric <= diam_metric + slack),
        in_diam_hops=in_diam_hops,
        hop_bound=hop_bound,
        hop_bound_holds=bool(in_diam_hops <= hop_bound + slack) if hypothesis_met else None,
        metric_min=m,
        metric_max=M,
        hypothesis_met=hypothesis_met,
    )
