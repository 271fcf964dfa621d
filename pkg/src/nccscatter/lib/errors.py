"""Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI returns for it:
2 for configuration problems, 3 for numerical/convergence failures and
4 for region or domain violations.
"""
from __future__ import annotations

from typing import Any, Optional


class ScatterError(Exception):
    """Base class for all nccscatter errors."""

    exit_code = 1

    def record(self) -> dict[str, Any]:
        """Machine-readable description used for the CLI error record."""
        return {"type": type(self).__name__, "error": str(self), "exit_code": self.exit_code}


class ConfigError(ScatterError):
    """Raised when a configuration or PES parameter file is invalid."""

    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None, column: Optional[int] = None):
        self.path = path
        self.line = line
        self.column = column
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
                if column is not None:
                    where += f":{column}"
            where += ": "
        super().__init__(f"{where}{message}")

    def record(self) -> dict[str, Any]:
        rec = super().record()
        rec.update({"path": self.path, "line": self.line, "column": self.column})
        return rec


class DomainError(ScatterError, ValueError):
    """Raised when an input lies outside the domain of an operation."""

    exit_code = 4


class RegionError(DomainError):
    """Raised for points in the self-crossing region of the NCC system."""


class SurfaceExitError(RegionError):
    """Raised when a point lies outside the Lagrange surface (E <= U)."""


class ClosedChannelError(DomainError):
    """Raised when the energy is below the threshold of a requested channel."""


BelowThresholdError = ClosedChannelError


class GridRangeError(DomainError):
    """Raised when an evaluation point falls outside a tabulated grid."""


class QuadratureOrderError(DomainError):
    """Raised when a quadrature rule is too short for the requested integrand."""


class NoReactiveMeasureError(DomainError):
    """Raised when every rectangle of a phase measure has zero weight."""


class NumericError(ScatterError, ArithmeticError):
    """Raised when a numerical procedure fails."""

    exit_code = 3


class ConvergenceError(NumericError):
    """Raised when an iterative solver does not converge."""


class StabilizationError(NumericError):
    """Raised when the coupled-channel matching system is ill-conditioned."""


class BasisDeficiencyError(NumericError):
    """Raised when the transverse grid resolves fewer bound states than requested."""


class BoundaryGrazingError(NumericError):
    """Raised when the integrator step underflows near the surface boundary.

    The partially integrated trajectory is kept on ``trajectory``.
    """

    def __init__(self, message: str, trajectory: Any = None):
        super().__init__(message)
        self.trajectory = trajectory


class NoSaddleError(NumericError):
    """Raised when no stationary point of saddle signature is found.

    ``scan`` holds the rows (q0, q1, V, |grad V|) of the seed scan.
    """

    def __init__(self, message: str, scan: Any = None):
        super().__init__(message)
        self.scan = scan
