"""Exception types shared across the package."""


class InfoMenuError(Exception):
    """Base class for all package-specific errors."""


class InvalidInstance(InfoMenuError):
    """A problem instance violates its structural invariants."""


class ZeroMassSignal(InfoMenuError):
    """A signal column has zero probability under the given prior."""


class BackendUnavailable(InfoMenuError):
    """The requested LP backend cannot be used."""


class NumericalFailure(InfoMenuError):
    """An LP backend failed to converge or produced an unusable solution."""


class DuplicateVariable(InfoMenuError):
    """A variable name was declared twice in one linear program."""


class UnknownConstraint(InfoMenuError):
    """A column references a constraint that does not exist."""


class NoPath(InfoMenuError):
    """The traffic network has no source-sink path."""


class TooLarge(InfoMenuError):
    """An enumeration-based routine was asked to exceed its size cap."""


class GridTooLarge(TooLarge):
    """The discretized signal grid exceeds the configured column cap."""


class NonConvergence(NumericalFailure):
    """An iterative solve hit its iteration cap without converging."""


class PairingMismatch(InfoMenuError):
    """Assumed and true type spaces cannot be paired as required."""
