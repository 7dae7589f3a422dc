"""Exception types shared across the package."""


class RidmixError(Exception):
    """Base class for all library errors."""


class UnsupportedLevelError(RidmixError, ValueError):
    """A singular generator cannot be refined to the requested level."""


class UnsupportedSupportError(RidmixError, ValueError):
    """An atomic support is neither a lattice nor liftable to a small torus."""


class ZeroCrossingError(RidmixError):
    """A characteristic function came too close to zero for a logarithm."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class DominationError(RidmixError):
    """The dominated-singular-part hypothesis is violated or uncertified."""


class CertificationError(RidmixError):
    """A certified computation could not reach the requested guarantee."""


class InversionError(RidmixError):
    """Fourier inversion of the discrete part failed its residual check."""


class NonDecayError(RidmixError):
    """The log-transform does not settle at the edges of the frequency window."""


class BudgetExceeded(RidmixError):
    """A computation would exceed its configured memory budget."""


class InconsistencyError(RidmixError):
    """Two certified routes contradict each other: an invariant breach."""


class StructureError(RidmixError, ValueError):
    """Rational-linear structure of frequencies cannot be determined."""
