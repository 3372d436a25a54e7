class TrimDroError(Exception):
    pass


class DimensionMismatch(TrimDroError, ValueError):
    pass


class InfeasibleEvent(TrimDroError):
    """The conditioning polyhedron is empty."""


class InfeasibleBudget(TrimDroError):
    """Transport budget below the minimum needed to reach the event."""


class UnboundedInner(TrimDroError):
    """The worst-case expectation is unbounded for every admissible multiplier."""


class UnboundedDecision(TrimDroError):
    """The outer minimisation over decisions is unbounded."""


class EmptyDecisionSet(TrimDroError):
    pass


class EventNotSingleton(TrimDroError):
    pass


class NoInteriorPoints(TrimDroError):
    pass


class EmptyKernel(TrimDroError):
    pass


class UnsupportedCase(TrimDroError):
    pass


class InsufficientData(TrimDroError):
    pass


class InvalidCovariance(TrimDroError, ValueError):
    pass


class NonpositiveCost(TrimDroError, ValueError):
    pass


class InvalidDelta(TrimDroError, ValueError):
    pass


class DegenerateAtom(UserWarning):
    """Worst-case mass escaping along a recession direction with vanishing weight."""
