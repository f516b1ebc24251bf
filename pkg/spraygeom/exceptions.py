"""Exceptions raised by spraygeom."""

from __future__ import annotations

from typing import Any


class SprayGeomError(Exception):
    """Base class for every spraygeom error."""


class DomainError(SprayGeomError):
    """Argument outside the domain of an operation."""


class EvaluationError(SprayGeomError):
    """Expression evaluation hit a non-differentiable point."""

    def __init__(self, message: str, node: str | None = None) -> None:
        """Initialize with the offending node text."""
        super().__init__(message if node is None else f"{message} (at '{node}')")
        self.node = node


class ConfigurationError(SprayGeomError):
    """Invalid manifold definition or command configuration."""


class ManifoldParseError(ConfigurationError):
    """Manifold file or expression could not be parsed."""

    def __init__(
        self, message: str, line: int | None = None, column: int | None = None
    ) -> None:
        """Initialize with the location of the parse failure."""
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class UnresolvedReferenceError(ConfigurationError):
    """A chart, spray or field name does not resolve."""


class DimensionMismatchError(ConfigurationError):
    """Declared and actual dimensions disagree."""


class DiagnosticError(SprayGeomError):
    """A check could not find any valid sample."""


class SprayAxiomError(SprayGeomError):
    """The spray is not fiberwise quadratic."""


class SplittingRejectedError(SprayGeomError):
    """A black-box splitting failed validation."""

    def __init__(self, message: str, residuals: dict[str, float]) -> None:
        """Initialize with the failing residuals."""
        details = ", ".join(f"{k}={v:.3e}" for k, v in residuals.items())
        super().__init__(f"{message}: {details}")
        self.residuals = residuals


class IntegrationError(SprayGeomError):
    """Geodesic integration could not continue."""

    def __init__(self, message: str, last_state: Any = None) -> None:
        """Initialize with the last accepted state."""
        super().__init__(message)
        self.last_state = last_state
