"""Exception types raised across the package."""


class KDError(ValueError):
    """Base class for precondition failures."""


class DimensionMismatch(KDError):
    pass


class InvalidBasis(KDError):
    pass


class InvalidState(KDError):
    pass


class IllConditionedOverlap(KDError):
    """Some overlap <b_k|a_j> is too small for a stable KD inversion."""


class InvalidEpsilon(KDError):
    pass


class InternalInconsistency(RuntimeError):
    """Two independent evaluation routes disagree. Always a bug."""


class InsufficientSamples(KDError):
    pass


class NotKDPositive(KDError):
    pass


class EpsilonTooLarge(KDError):
    pass


class UndefinedWeakValue(KDError):
    pass


class SetEmpty(KDError):
    pass


class NoSeparation(KDError):
    pass


class EmptyFeasibleSet(KDError):
    pass


class NotADecomposition(KDError):
    pass


class LedgerMismatch(KDError):
    pass
