"""Exception types shared across the package."""


class CislunarError(Exception):
    """Base class for all package-specific errors."""


class SingularState(CislunarError):
    """State coincides with one of the primaries (within 1e-12 LU)."""


class IntegrationFailure(CislunarError):
    """Adaptive integrator failed (step-size underflow or solver error)."""


class EigenFailure(CislunarError):
    """Eigen-decomposition of a monodromy matrix did not converge."""


class DomainError(CislunarError):
    """Scalar argument outside its mathematical domain."""


class DegenerateGeometry(CislunarError):
    """Observer/target/Sun separation below 1e-12 LU."""


class ObserverInsideBody(CislunarError):
    """Observer position lies inside an occulting body."""


class ConfigError(CislunarError):
    """Invalid scenario configuration or constructor arguments."""


class ParseError(CislunarError):
    """Malformed input file.  Carries a line number when available."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionMismatch(CislunarError):
    """Declared dimensions disagree with the data that follows them."""


class InfeasibleSolution(CislunarError):
    """Solution violates the optimization model constraints."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class EmptyDemand(CislunarError):
    """Demand matrix has no active entries."""


class TooLarge(CislunarError):
    """Brute-force enumeration bound exceeded."""


class PermutationCapExceeded(CislunarError):
    """Too many unallocated slots for full-factorial enumeration."""


class NoFeasibleSolution(CislunarError):
    """No feasible solution exists (p exceeds the number of slots)."""
