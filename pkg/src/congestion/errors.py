"""Exception types shared across the package."""


class CongestionError(Exception):
    """Base class for all library-specific errors."""


class InvalidPathError(CongestionError, ValueError):
    """A node sequence does not trace edges of the carrier graph."""


class NegativeLoopError(CongestionError):
    """A reachable loop has negative total length under the given metric."""

    def __init__(self, loop, total):
        self.loop = loop
        self.total = total
        super().__init__(f"negative loop {tuple(loop.nodes)} with total length {total:.6g}")


class OddnessError(CongestionError, ValueError):
    """A metric fails to be odd over the requested symmetrization set."""

    def __init__(self, edge, reverse_edge, values):
        self.edge_pair = (edge, reverse_edge)
        super().__init__(
            f"metric is not odd over the pair {edge}/{reverse_edge}: values {values}"
        )


class ModelViolationError(CongestionError):
    """A modelling hypothesis (e.g. nonnegative marginal cost) fails at runtime."""


class DomainError(CongestionError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class InfeasibleError(CongestionError):
    """The instance admits no feasible flow (required pair is disconnected)."""


class DecompositionStalledError(CongestionError):
    """Floating-point mass fell below the positivity threshold mid-decomposition."""


class PreconditionError(CongestionError, ValueError):
    """A documented precondition of the operation is violated."""


class ConvergenceError(CongestionError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)
