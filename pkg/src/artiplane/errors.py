"""Exception types shared across the package."""


class GeometryError(Exception):
    """Base class for all artiplane errors."""


class ContractViolation(GeometryError):
    """An argument violates a documented precondition (e.g. shape mismatch)."""


class DegenerateInput(GeometryError):
    """Input is structurally valid but admits no well-defined result."""


class GenerationError(GeometryError):
    """A scene spec cannot be realized as geometry."""


class PoseFailure(GeometryError):
    """Pose solving failed. Carries diagnostics for the caller."""

    def __init__(self, message: str, inlier_count: int = 0, residual: float = float("inf")):
        super().__init__(message)
        self.inlier_count = inlier_count
        self.residual = residual
