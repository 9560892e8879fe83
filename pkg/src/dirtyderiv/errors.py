"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`DirtyDerivError`, so callers (and the CLI) can separate contract
violations from genuine bugs.
"""


class DirtyDerivError(Exception):
    """Base class for all package errors."""


# numerics
class NonSquare(DirtyDerivError, ValueError):
    pass


class DimensionMismatch(DirtyDerivError, ValueError):
    pass


class NotSymmetric(DirtyDerivError, ValueError):
    pass


class NonFiniteEntries(DirtyDerivError, ValueError):
    pass


class ConvergenceFailure(DirtyDerivError, ArithmeticError):
    pass


class NotHurwitz(DirtyDerivError, ValueError):
    pass


class SingularSystem(DirtyDerivError, ArithmeticError):
    pass


# plant / gains
class InvalidPlant(DirtyDerivError, ValueError):
    pass


class UnstablePoleRequested(DirtyDerivError, ValueError):
    pass


class NonConjugateSet(DirtyDerivError, ValueError):
    pass


class IterationDivergence(DirtyDerivError, ArithmeticError):
    pass


# closed loop / certificates
class SignMismatch(DirtyDerivError, ValueError):
    pass


class NotStabilizing(DirtyDerivError, ValueError):
    """The supplied gain does not make the nominal closed loop Hurwitz."""

    def __init__(self, message, abscissa=None):
        super().__init__(message)
        self.abscissa = abscissa


class UnstableAtCap(DirtyDerivError, ValueError):
    pass


# simulation
class StepTooLarge(DirtyDerivError, ValueError):
    pass


class EmptyInput(DirtyDerivError, ValueError):
    pass


class NonFiniteState(DirtyDerivError, ArithmeticError):
    """Integration diverged; ``step`` is the first offending step index."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step
