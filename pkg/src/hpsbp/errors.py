"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """Raised when an argument is outside its documented range or shape."""


class GeometryInvalid(ValueError):
    """Raised when a mapping is degenerate (non-positive Jacobian, zero normal)."""


class GclUnsolvable(ValueError):
    """Raised when a metric optimization right-hand side violates the solvability constraint."""


class InadmissibleState(ValueError):
    """Raised when a state has non-positive density or temperature."""


class StepSizeUnderflow(RuntimeError):
    """Raised when the adaptive time step collapses below the allowed minimum."""
