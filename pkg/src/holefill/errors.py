"""Exception types raised across the package."""


class HoleFillError(Exception):
    """Base class for all package errors."""


class DomainError(HoleFillError, ValueError):
    """Parameter outside the valid domain of a knot vector or surface."""


class SingularityError(HoleFillError, ArithmeticError):
    """Degenerate tangent plane or otherwise singular geometry."""


class TopologyError(HoleFillError, ValueError):
    """Mesh connectivity is not manifold."""


class DegeneracyError(HoleFillError, ValueError):
    """Point set too degenerate (coincident or collinear) for a fit."""


class ProjectionError(HoleFillError):
    """Too many samples failed to project onto a surface.

    ``diagnostics`` holds the per-sample results so callers can report them.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class ShapeError(HoleFillError, ValueError):
    """Array or sequence shapes do not agree."""


class NormalizationError(HoleFillError, ValueError):
    """Coordinates were expected in the unit cube."""


class ConfigurationError(HoleFillError, ValueError):
    """Invalid configuration value."""


class LabelError(HoleFillError, ValueError):
    """Class label outside the valid range."""


class SingularSystemError(HoleFillError, ArithmeticError):
    """Linear system could not be factorized even with regularization."""


class TrainingDivergedError(HoleFillError, FloatingPointError):
    """Loss became non-finite during training."""
