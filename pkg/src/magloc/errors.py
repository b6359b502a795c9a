"""Exception types shared across the package."""


class MaglocError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(MaglocError, ValueError):
    """A physical, geometric, or configuration value is outside its domain."""


class ConfigError(MaglocError, ValueError):
    """An experiment configuration file is malformed or inconsistent."""


class SingularGeometryError(MaglocError, ValueError):
    """Agent and anchor positions coincide, so the field model blows up.

    ``anchor_index`` identifies the offending anchor when known.
    """

    def __init__(self, message, anchor_index=None):
        super().__init__(message)
        self.anchor_index = anchor_index


class RankDeficiencyError(MaglocError, ValueError):
    """Design matrix of the constrained linear solve is numerically rank deficient."""


class DegenerateRhsError(MaglocError, ValueError):
    """Right-hand side of the constrained linear solve is numerically orthogonal
    to the design column space, so the constrained minimizer is not unique."""


class UnboundedPoseError(MaglocError, ValueError):
    """Information matrix is singular or too ill-conditioned to invert reliably.

    ``condition`` carries the measured (eigenvalue-ratio) condition number.
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class EstimationError(MaglocError, RuntimeError):
    """No usable estimate could be produced, e.g. every restart failed."""
