"""One-road and two-roads dynamic congestion: closed forms and iterative solvers.

The single road keeps undelivered stock j(t) on a waiting loop and ships
-D-j(t) per step; its optimality system is the discrete obstacle problem
min(j, -Lap j + beta j + eps) = 0 with j(0)=1, j(T)=0. The crossing-roads
model couples two such stocks through the shipping terms and is solved by
coordinate sweeps of an exact 2-d rectangle minimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamic import OMEGA, TimeExtendedGraph
from .errors import ConvergenceError, PreconditionError
from .flows import EdgeFlow, NodeFunction
from .graph import DirectedGraph
from .potentials import QuadraticForm

ENERGY_TOL = 1e-12
MAX_SWEEPS = 100_000


@dataclass
class RoadTrajectory:
    """Stock of undelivered mass per time step, t = 0..T."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ValueError("a trajectory needs at least two time points")

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    @property
    def mass(self) -> float:
        return float(self.values[0])

    def __getitem__(self, t: int) -> float:
        return float(self.values[t])

    def steps(self) -> np.ndarray:
        """Backward differences j(t) - j(t-1), t = 1..T (shipments are their negatives)."""
        return np.diff(self.values)

    def shipments(self) -> np.ndarray:
        return -self.steps()

    def monotonicity_violation(self) -> float:
        return float(max(0.0, self.steps().max())) if self.horizon else 0.0

    def negativity_violation(self) -> float:
        return float(max(0.0, -self.values.min()))

    def validate(self, mass: float = 1.0, tol: float = 1e-12):
        """List of human-readable invariant violations (empty when clean)."""
        problems = []
        if abs(self.values[0] - mass) > tol:
            problems.append(f"j(0) = {self.values[0]!r}, expected {mass!r}")
        if abs(self.values[-1]) > tol:
            problems.append(f"j(T) = {self.values[-1]!r}, expected 0")
        if self.monotonicity_violation() > tol:
            problems.append("trajectory is not non-increasing")
        if self.negativity_violation() > tol:
            problems.append("trajectory goes negative")
        return problems


@dataclass
class HalfIntegerMultiplier:
    """Values on the half-integer grid 1/2, 3/2, ..., T - 1/2."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __getitem__(self, k: int) -> float:
        """Value at k + 1/2."""
        return float(self.values[k])

    def min(self) -> float:
        return float(self.values.min())


def characteristic_root(beta: float) -> float:
    """Largest root of x^2 - (2 + beta) x + 1; equals 1 exactly when beta = 0."""
    rho = 1.0 + beta / 2.0
    return rho + math.sqrt(rho * rho - 1.0)


def free_solution(T: int, beta: float, eps: float) -> RoadTrajectory:
    """Unconstrained stock profile with j(0)=1, j(T)=0.

    Solves Lap j = beta j + eps between the boundary values; may dip below
    zero, which is exactly what the finite support time detects.
    """
    if T < 1:
        raise ValueError("horizon must be at least 1")
    if beta < 0 or eps < 0:
        raise ValueError("beta and eps must be nonnegative")
    t = np.arange(T + 1, dtype=float)
    if beta > 0:
        r = characteristic_root(beta)
        denom = r ** T - r ** (-T)
        ratio = eps / beta
        vals = (
            (1.0 + ratio) * (np.power(r, T - t) - np.power(r, t - T)) / denom
            + ratio * (np.power(r, t) - np.power(r, -t)) / denom
            - ratio
        )
    else:
        vals = 1.0 - (1.0 + eps * T * T / 2.0) * (t / T) + eps * t * t / 2.0
    vals[0] = 1.0
    vals[-1] = 0.0
    return RoadTrajectory(vals)


def compute_T0(beta: float, eps: float, *, max_scan: int = 1_000_000) -> float:
    """First horizon whose one-longer free solution dips negative at its tail.

    Returns +inf for eps = 0 (the free solution never needs truncation).
    """
    if beta < 0 or eps < 0:
        raise ValueError("beta and eps must be nonnegative")
    if eps == 0:
        return math.inf
    for T in range(1, max_scan + 1):
        if free_solution(T + 1, beta, eps)[T] < 0:
            return T
    raise ConvergenceError("support-time scan exhausted its range")


def characteristic_growth(beta: float, x: float) -> float:
    """(r^(x+1) - r^-(x+1) - r^x + r^-x) / (r - 1/r) for the largest root r."""
    r = characteristic_root(beta)
    return (r ** (x + 1) - r ** (-(x + 1)) - r ** x + r ** (-x)) / (r - 1.0 / r)


def t0_from_characteristic(beta: float, eps: float) -> int:
    """Support time via the growth-function inverse; defined for beta > 0."""
    if beta <= 0 or eps <= 0:
        raise ValueError("this form needs beta > 0 and eps > 0")
    target = 1.0 + beta / eps
    lo, hi = 0.0, 1.0
    while characteristic_growth(beta, hi) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if characteristic_growth(beta, mid) < target:
            lo = mid
        else:
            hi = mid
    return int(math.floor(0.5 * (lo + hi))) + 1


def one_road_solve(T: int, beta: float, eps: float) -> RoadTrajectory:
    """Optimal stock profile: the free solution truncated at the support time."""
    if eps == 0:
        return free_solution(T, beta, eps)
    t0 = compute_T0(beta, eps)
    horizon = int(min(T, t0))
    head = free_solution(horizon, beta, eps).values
    vals = np.zeros(T + 1)
    vals[: horizon + 1] = head
    return RoadTrajectory(vals)


def one_road_obstacle_solve(
    T: int,
    beta: float,
    eps: float,
    *,
    tol: float = 1e-10,
    max_sweeps: int = 1_000_000,
) -> RoadTrajectory:
    """Projected Gauss-Seidel for min(j, -Lap j + beta j + eps) = 0.

    Boundary values j(0)=1, j(T)=0; iterates until the pointwise residual of
    the complementarity system drops below ``tol``.
    """
    if T < 1:
        raise ValueError("horizon must be at least 1")
    j = np.zeros(T + 1)
    j[0] = 1.0
    denom = 2.0 + beta
    for _ in range(max_sweeps):
        for t in range(1, T):
            j[t] = max(0.0, (j[t - 1] + j[t + 1] - eps) / denom)
        resid = 0.0
        for t in range(1, T):
            lap = j[t + 1] - 2.0 * j[t] + j[t - 1]
            resid = max(resid, abs(min(j[t], -lap + beta * j[t] + eps)))
        if resid <= tol:
            return RoadTrajectory(j)
    raise ConvergenceError(
        "projected Gauss-Seidel stalled above tolerance", residual=resid
    )


def one_road_scaled(T: int, mass: float, beta: float, eps: float) -> RoadTrajectory:
    """Optimal profile for an arbitrary starting mass.

    The quadratic problem is positively homogeneous: j solves the unit
    problem with waiting cost eps/mass exactly when mass * j solves the
    mass-m problem with waiting cost eps.
    """
    if mass < 0:
        raise ValueError("mass must be nonnegative")
    if mass == 0:
        return RoadTrajectory(np.zeros(T + 1))
    return RoadTrajectory(mass * one_road_solve(T, beta, eps / mass).values)


def one_road_graph() -> DirectedGraph:
    """Two nodes, a waiting loop at the source, one shipping edge."""
    return DirectedGraph(("a", "b"), (("a", "a"), ("a", "b")))


def one_road_potential(beta: float, eps: float, delta: float = 0.0) -> QuadraticForm:
    """Quadratic shipping cost plus linear (and optionally quadratic) waiting cost.

    ``delta`` adds a linear shipping cost; with fixed total shipment it only
    shifts the objective by a constant, but it makes the marginal-cost lower
    bound positive.
    """
    g = one_road_graph()
    Q = np.array([[beta, 0.0], [0.0, 1.0]])
    c = np.array([eps, delta])
    return QuadraticForm(g, Q, c)


def one_road_edge_flow(ext: TimeExtendedGraph, traj: RoadTrajectory) -> EdgeFlow:
    """Layered edge flow induced by a stock profile on the one-road graph."""
    if ext.base.nodes != ("a", "b"):
        raise ValueError("expected the one-road base graph")
    if ext.horizon != traj.horizon:
        raise ValueError("trajectory and graph horizons differ")
    j = traj.values
    vals = np.zeros(ext.graph.n_edges)
    for t in range(1, ext.horizon + 1):
        ship = max(0.0, j[t - 1] - j[t])
        vals[ext.transit_edge_id(("a", "a"), t)] = max(0.0, j[t])
        vals[ext.transit_edge_id(("a", "b"), t)] = ship
        vals[ext.deposit_edge_id("b", t)] = ship
    return EdgeFlow(ext.graph, vals)


def one_road_multiplier(
    ext: TimeExtendedGraph, traj: RoadTrajectory, beta: float, eps: float, delta: float = 0.0
) -> NodeFunction:
    """Layered multiplier built by forward recursion from the stock profile.

    Valid (zero optimality residual) whenever the trajectory solves the
    obstacle system; constructed values on the deposit layer are the minimal
    consistent choice.
    """
    T = ext.horizon
    j = traj.values
    ship = np.concatenate(([0.0], -(np.diff(j))))  # ship[t], t = 1..T
    xi_aa = beta * j + eps
    xi_ab = ship + delta
    lam = np.zeros(T + 1)
    for t in range(1, T):
        lam[t] = xi_ab[t + 1] - xi_ab[t] + xi_aa[t]
    lam[T] = 0.0
    u = {}
    u[("a", 0)] = 0.0
    for t in range(T):
        u[("a", t + 1)] = u[("a", t)] + xi_aa[t + 1] - lam[t + 1]
        u[("b", t + 1)] = u[("a", t)] + xi_ab[t + 1]
    u[("b", 0)] = u[("b", 1)]
    u[("b", OMEGA)] = u[("b", T)]
    u[("a", OMEGA)] = min(u[("a", t)] for t in range(T + 1))
    return NodeFunction.of(ext.graph, u)


def two_roads_graph() -> DirectedGraph:
    nodes = ("a1", "b1", "a2", "b2")
    edges = (("a1", "a1"), ("a1", "b1"), ("a2", "a2"), ("a2", "b2"))
    return DirectedGraph(nodes, edges)


def two_roads_potential(gamma: float, eps: float) -> QuadraticForm:
    """Per-road quadratic shipping and linear waiting, with cross-road coupling."""
    g = two_roads_graph()
    ship1 = g.edge_id(("a1", "b1"))
    ship2 = g.edge_id(("a2", "b2"))
    Q = np.zeros((4, 4))
    Q[ship1, ship1] = 1.0
    Q[ship2, ship2] = 1.0
    Q[ship1, ship2] = Q[ship2, ship1] = gamma
    c = np.zeros(4)
    c[g.edge_id(("a1", "a1"))] = eps
    c[g.edge_id(("a2", "a2"))] = eps
    return QuadraticForm(g, Q, c)


def _rect_energy(j1, j2, box, gamma, eps):
    j1_next, j1_prev, j2_next, j2_prev = box
    k1 = 0.5 * (j1 - j1_prev) ** 2 + 0.5 * (j1 - j1_next) ** 2 + eps * j1
    k2 = 0.5 * (j2 - j2_prev) ** 2 + 0.5 * (j2 - j2_next) ** 2 + eps * j2
    inter = gamma * (j1 - j1_prev) * (j2 - j2_prev) + gamma * (j1 - j1_next) * (j2 - j2_next)
    return k1 + k2 + inter


def _edge_argmin(fixed_other, box, gamma, eps, which: int):
    """Exact minimizer along one edge of the rectangle (1-d quadratic clip)."""
    j1_next, j1_prev, j2_next, j2_prev = box
    if which == 1:
        lo, hi = j1_next, j1_prev
        center = 0.5 * (j1_prev + j1_next) - 0.5 * (
            eps + gamma * (2.0 * fixed_other - j2_prev - j2_next)
        )
    else:
        lo, hi = j2_next, j2_prev
        center = 0.5 * (j2_prev + j2_next) - 0.5 * (
            eps + gamma * (2.0 * fixed_other - j1_prev - j1_next)
        )
    return min(hi, max(lo, center))


def rect_minimize_energy(
    j1_prev: float,
    j1_next: float,
    j2_prev: float,
    j2_next: float,
    gamma: float,
    eps: float,
):
    """Exact minimizer of the local sweep energy over the admissible rectangle.

    The box is [j1_next, j1_prev] x [j2_next, j2_prev]. The minimum sits at
    the interior critical point when the coupling is contractive and that
    point is admissible; otherwise on one of the four edges, each a 1-d
    convex quadratic solved in closed form. Degenerate ties are broken
    toward the bottom edge (then the right one), matching the limit of
    strictly resolvable instances.
    """
    if j1_next > j1_prev + 1e-15 or j2_next > j2_prev + 1e-15:
        raise PreconditionError("rectangle is empty: next value exceeds previous")
    box = (j1_next, j1_prev, j2_next, j2_prev)
    candidates = []
    if abs(gamma) < 1.0:
        shift = eps / (2.0 * (gamma + 1.0))
        crit = (0.5 * (j1_prev + j1_next) - shift, 0.5 * (j2_prev + j2_next) - shift)
        if j1_next <= crit[0] <= j1_prev and j2_next <= crit[1] <= j2_prev:
            candidates.append(("interior", crit))
    bottom = (_edge_argmin(j2_next, box, gamma, eps, 1), j2_next)
    right = (j1_prev, _edge_argmin(j1_prev, box, gamma, eps, 2))
    left = (j1_next, _edge_argmin(j1_next, box, gamma, eps, 2))
    top = (_edge_argmin(j2_prev, box, gamma, eps, 1), j2_prev)
    candidates = [("bottom", bottom), ("right", right), ("left", left), ("top", top)] + candidates
    scored = [(pt, _rect_energy(pt[0], pt[1], box, gamma, eps)) for _, pt in candidates]
    best_val = min(v for _, v in scored)
    scale = 1.0 + abs(best_val)
    for pt, v in scored:
        if v <= best_val + 1e-12 * scale:
            return pt
    raise AssertionError("unreachable")


def two_roads_energy(j1: np.ndarray, j2: np.ndarray, gamma: float, eps: float) -> float:
    d1 = np.diff(j1)
    d2 = np.diff(j2)
    return float(
        0.5 * (d1 @ d1) + 0.5 * (d2 @ d2) + gamma * (d1 @ d2)
        + eps * (j1[1:].sum() + j2[1:].sum())
    )


@dataclass
class TwoRoadsSolution:
    j1: RoadTrajectory
    j2: RoadTrajectory
    energies: list
    sweeps: int
    converged: bool
    gamma: float
    eps: float


def two_roads_solve(
    T: int,
    m1: float,
    m2: float,
    gamma: float,
    eps: float,
    *,
    init: tuple | None = None,
    tol_energy: float = ENERGY_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> TwoRoadsSolution:
    """Coordinate sweeps of the local rectangle minimization until energy stalls.

    Each sweep visits t = 1..T-1 and replaces (j1(t), j2(t)) by the exact
    minimizer constrained between the neighboring values, which preserves
    monotonicity at every step. The energy is non-increasing and bounded, so
    the iteration always settles; hitting the sweep cap is reported, not
    raised.
    """
    if T < 2:
        raise ValueError("need at least one interior time")
    if m1 < 0 or m2 < 0 or gamma < 0 or eps < 0:
        raise ValueError("parameters must be nonnegative")
    if init is None:
        j1 = np.concatenate((np.full(T, m1), [0.0]))
        j2 = np.concatenate((np.full(T, m2), [0.0]))
    else:
        j1 = np.asarray(init[0], dtype=float).copy()
        j2 = np.asarray(init[1], dtype=float).copy()
        for arr, m in ((j1, m1), (j2, m2)):
            if len(arr) != T + 1:
                raise PreconditionError("initial trajectories must have T+1 entries")
            if abs(arr[0] - m) > 1e-12 or abs(arr[-1]) > 1e-12:
                raise PreconditionError("initial trajectories must match the boundary values")
            if np.diff(arr).max(initial=0.0) > 1e-12:
                raise PreconditionError("initial trajectories must be non-increasing")
    energies = [two_roads_energy(j1, j2, gamma, eps)]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for t in range(1, T):
            j1[t], j2[t] = rect_minimize_energy(
                j1[t - 1], j1[t + 1], j2[t - 1], j2[t + 1], gamma, eps
            )
        energies.append(two_roads_energy(j1, j2, gamma, eps))
        if abs(energies[-1] - energies[-2]) < tol_energy:
            converged = True
            break
    return TwoRoadsSolution(
        j1=RoadTrajectory(j1),
        j2=RoadTrajectory(j2),
        energies=energies,
        sweeps=sweeps,
        converged=converged,
        gamma=gamma,
        eps=eps,
    )


@dataclass
class TwoRoadsKKTReport:
    alpha1: HalfIntegerMultiplier
    alpha2: HalfIntegerMultiplier
    residual: float
    complementarity: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {
            "residual": self.residual,
            "alpha1": list(self.alpha1.values),
            "alpha2": list(self.alpha2.values),
        }


def _recover_alpha(rhs: np.ndarray, neg_step: np.ndarray, act_tol: float) -> np.ndarray:
    """Multiplier on the half-integer grid from its defining differences.

    ``rhs[t]`` prescribes alpha(t+1/2) - alpha(t-1/2); the one free constant
    is pinned by complementarity: alpha must vanish where the monotonicity
    constraint is slack (strictly decreasing step), or failing any slack
    positions, sit at the smallest nonnegative choice.
    """
    T = len(neg_step)
    beta = np.zeros(T)
    for t in range(1, T):
        beta[t] = beta[t - 1] + rhs[t - 1]
    slack = np.flatnonzero(neg_step > act_tol)
    shift = -beta[slack].min() if slack.size else -beta.min()
    return beta + shift


def two_roads_kkt(
    j1: RoadTrajectory,
    j2: RoadTrajectory,
    gamma: float,
    eps: float,
    *,
    act_tol: float = 1e-7,
) -> TwoRoadsKKTReport:
    """Recover the monotonicity multipliers and report the complementarity residual.

    The defining equations hold by construction; the report measures how far
    the recovered multipliers are from being nonnegative and complementary
    to the stock decrements.
    """
    T = j1.horizon
    if j2.horizon != T:
        raise ValueError("trajectories have different horizons")
    v1, v2 = j1.values, j2.values
    lap1 = v1[2:] - 2.0 * v1[1:-1] + v1[:-2]
    lap2 = v2[2:] - 2.0 * v2[1:-1] + v2[:-2]
    rhs1 = -lap1 - gamma * lap2 + eps * v1[1:-1]
    rhs2 = -lap2 - gamma * lap1 + eps * v2[1:-1]
    neg1 = -np.diff(v1)
    neg2 = -np.diff(v2)
    a1 = _recover_alpha(rhs1, neg1, act_tol)
    a2 = _recover_alpha(rhs2, neg2, act_tol)
    comp = np.maximum(
        np.abs(np.minimum(neg1, a1)),
        np.abs(np.minimum(neg2, a2)),
    )
    residual = float(
        max(
            comp.max() if comp.size else 0.0,
            max(0.0, -a1.min()) if a1.size else 0.0,
            max(0.0, -a2.min()) if a2.size else 0.0,
        )
    )
    return TwoRoadsKKTReport(
        alpha1=HalfIntegerMultiplier(a1),
        alpha2=HalfIntegerMultiplier(a2),
        residual=residual,
        complementarity=comp,
    )


def two_roads_hessian(T: int, gamma: float) -> np.ndarray:
    """Quadratic form of the interior unknowns; definite exactly for |gamma| < 1."""
    K = 2.0 * np.eye(T - 1) - np.eye(T - 1, k=1) - np.eye(T - 1, k=-1)
    top = np.hstack((K, gamma * K))
    bottom = np.hstack((gamma * K, K))
    return np.vstack((top, bottom))


@dataclass
class MaxPrincipleReport:
    accepted: bool
    conclusion_holds: bool
    strong_conclusion_holds: bool

    def __bool__(self):
        return self.accepted


def check_max_principle(u, beta: float) -> MaxPrincipleReport:
    """Verify the discrete supersolution property and its sign conclusions.

    Accepts sequences with Lap u - beta u >= 0 at interior times and u <= 0
    at both ends. For accepted sequences the report also states whether
    u <= 0 everywhere, and whether the strong form holds: an interior zero
    forces the sequence to vanish identically. Comparisons are exact.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or len(u) < 2:
        raise ValueError("need a sequence of at least two values")
    interior_ok = all(
        u[t + 1] - (2.0 + beta) * u[t] + u[t - 1] >= 0 for t in range(1, len(u) - 1)
    )
    ends_ok = u[0] <= 0 and u[-1] <= 0
    accepted = bool(interior_ok and ends_ok)
    conclusion = bool(np.all(u <= 0))
    strong = True
    if accepted and np.any(u[1:-1] == 0):
        strong = bool(np.all(u == 0))
    return MaxPrincipleReport(
        accepted=accepted,
        conclusion_holds=conclusion,
        strong_conclusion_holds=strong,
    )
