"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`KaczmimoError`, which itself is a ``ValueError`` so callers that
only care about "bad input" can catch the builtin.
"""


class KaczmimoError(ValueError):
    """Base class for all package errors."""


class ShapeMismatch(KaczmimoError):
    pass


class NotPositiveDefinite(KaczmimoError):
    pass


class NotHermitian(KaczmimoError):
    pass


class InvalidCorrelation(KaczmimoError):
    pass


class DegenerateDistribution(KaczmimoError):
    pass


class ZeroRowSelected(KaczmimoError):
    pass


class IndexOutOfRange(KaczmimoError):
    pass


class ZeroRowWithPositiveWeight(KaczmimoError):
    pass


class RankDeficient(KaczmimoError):
    pass


class ZeroSignal(KaczmimoError):
    pass


class DegenerateSINR(KaczmimoError):
    pass


class InsufficientSamples(KaczmimoError):
    pass


class NonpositiveReference(KaczmimoError):
    pass


class BudgetTooSmall(KaczmimoError):
    pass


class TrialFailure(KaczmimoError):
    """A numerical error inside one Monte-Carlo trial.

    Carries the failing operation name and trial index.
    """

    def __init__(self, operation, trial, cause):
        self.operation = operation
        self.trial = trial
        self.cause = cause
        super().__init__(f"{operation} failed in trial {trial}: {type(cause).__name__}: {cause}")

    def __reduce__(self):
        return (type(self), (self.operation, self.trial, self.cause))
