from typing import Any, Dict, List, Optional


class PoiseuilleError(Exception):
    """
    Base error for the solver suite

    Args:
        message: Human readable description
        module: Name of the module that failed
        time: Simulation time at which the failure happened, if known
    """

    exit_code = 3

    def __init__(self, message: str, module: str = "", time: Optional[float] = None):
        super().__init__(message)
        self.message = message
        self.module = module
        self.time = time

    def describe(self) -> str:
        """Render as "<Class> in <module> at t=<time>: <message>" for the CLI"""
        where = f" in {self.module}" if self.module else ""
        when = f" at t={self.time:.6g}" if self.time is not None else ""
        return f"{type(self).__name__}{where}{when}: {self.message}"

    def at_time(self, time: float) -> "PoiseuilleError":
        """Attach a time stamp if none was set yet"""
        if self.time is None:
            self.time = time
        return self


class ConfigurationError(PoiseuilleError):
    """Invalid configuration or data (exit code 2)"""

    exit_code = 2


class SolverError(PoiseuilleError):
    """Numerical failure of a solver component (exit code 3)"""

    exit_code = 3


# Validation
class CompatibilityViolation(ConfigurationError):
    """
    Initial data violate a compatibility identity

    Args:
        violations: One record per failing identity with endpoint, identity and residual
    """

    def __init__(self, violations: List[Dict[str, Any]]):
        first = violations[0]
        message = (
            f"{first['identity']} fails at x={first['endpoint']} "
            f"(residual {first['residual']:.3e})"
        )
        if len(violations) > 1:
            message += f" and {len(violations) - 1} more"
        super().__init__(message, module="model", time=0.0)
        self.violations = violations


class InvalidCoefficients(ConfigurationError):
    """Boundary coefficients are negative or degenerate"""


# Characteristic solver
class QuadratureFailure(SolverError):
    pass


class NonpositivePQ(SolverError):
    pass


class HorizonNotReached(SolverError):
    pass


class CuspAtRobinBoundary(SolverError):
    pass


class LookupMiss(SolverError):
    pass


# Heat kernels
class NonpositiveTimeGap(SolverError):
    pass


class WindowUnderResolved(SolverError):
    pass


# Fixed point
class FixedPointDiverged(SolverError):
    pass


class WindowCollapsed(SolverError):
    pass


# Finite-difference oracle
class CFLViolation(SolverError):
    pass


class BlowupDetected(SolverError):
    pass
