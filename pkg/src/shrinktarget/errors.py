"""Exception types shared across the package.

Every error carries a stable ``name`` so the CLI can report it verbatim.
"""


class ShrinkTargetError(Exception):
    """Base class for all package errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


class SingularMatrix(ShrinkTargetError):
    pass


class DomainError(ShrinkTargetError, ValueError):
    pass


class NoValidIndex(ShrinkTargetError):
    pass


class Unsupported(ShrinkTargetError):
    pass


class CapExceeded(ShrinkTargetError):
    def __init__(self, message: str, required: int | None = None):
        super().__init__(message)
        self.required = required


class RadiusTooLarge(ShrinkTargetError, ValueError):
    pass


class TooFewCenters(ShrinkTargetError):
    pass


class RationalEigenvalue(ShrinkTargetError):
    pass


class NotIrrational(ShrinkTargetError, ValueError):
    pass


class InsufficientMass(ShrinkTargetError):
    pass


class ConstructionFailed(ShrinkTargetError):
    pass


class ManifestError(ShrinkTargetError):
    pass
