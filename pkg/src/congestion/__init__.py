"""Efficient traffic equilibria on finite directed graphs.

Static and dynamic congestion problems are solved as flow optimizations
with divergence constraints; solutions are certified through the
complementarity system coupling flows with node multipliers.
"""

from .beckmann import (
    KKTReport,
    MultiplierRecovery,
    SolveOptions,
    SolverResult,
    SupportBoundReport,
    kkt_residual,
    multiplier_recover,
    solve_beckmann_frank_wolfe,
    support_bound_report,
)
from .constraints import Capacity, DivergenceConstraint, FixedMeasure, TargetSet
from .dynamic import (
    OMEGA,
    StationaryFamily,
    TimeExtendedGraph,
    active_horizon,
    extend_graph,
    extend_potential,
    finite_propagation_report,
    lift_measures,
    solve_dynamic,
    zero_extension_check,
)
from .errors import (
    CongestionError,
    ConvergenceError,
    DecompositionStalledError,
    DomainError,
    InfeasibleError,
    InvalidPathError,
    ModelViolationError,
    NegativeLoopError,
    OddnessError,
    PreconditionError,
)
from .flows import (
    EdgeFlow,
    NodeFunction,
    NodeMeasure,
    PathProfile,
    TransportPlan,
    divergence,
    edge_flow,
    erase_loops,
    expected_distance,
    expected_length,
    gradient,
    loop_erasure,
    marginals,
    transport_plan,
)
from .graph import (
    DirectedGraph,
    Metric,
    Path,
    diameter,
    enumerate_simple_paths,
    geodesic_check,
    inner_diameter,
    nonneg_loop_check,
    path_length,
    potential_from_metric,
    shortest_distances,
    symmetrize,
)
from .potentials import (
    LocalSeparable,
    Potential,
    QuadraticForm,
    TimeExtended,
    legendre_flow,
    potential_gradient,
)
from .roads import (
    HalfIntegerMultiplier,
    RoadTrajectory,
    check_max_principle,
    compute_T0,
    free_solution,
    one_road_edge_flow,
    one_road_graph,
    one_road_multiplier,
    one_road_obstacle_solve,
    one_road_potential,
    one_road_scaled,
    one_road_solve,
    rect_minimize_energy,
    two_roads_graph,
    two_roads_hessian,
    two_roads_kkt,
    two_roads_potential,
    two_roads_solve,
)
from .smirnov import (
    WardropReport,
    positive_path_to_sink,
    smirnov_decompose,
    wardrop_certificate,
)

__version__ = "0.1.0"
