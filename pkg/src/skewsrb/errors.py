"""Exception types.

Two families: ``ValidationError`` for bad inputs (CLI exit code 2) and
``NumericalFailure`` for algorithms that could not deliver (exit code 3).
"""


class SkewSRBError(Exception):
    """Base class for all package errors."""


class ValidationError(SkewSRBError, ValueError):
    """Input rejected before any numerics ran."""


class NumericalFailure(SkewSRBError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy answer."""


class InvalidParams(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class InfeasibleMeasures(ValidationError):
    pass


class NewtonDivergence(NumericalFailure):
    pass


class BranchCollision(NumericalFailure):
    pass


class SingularMatrix(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class NoGap(NumericalFailure):
    pass


class LinearSolveFailure(NumericalFailure):
    pass


class StepTooSmall(NumericalFailure):
    pass


class NotHyperbolic(NumericalFailure):
    pass


class WitnessNotFound(NumericalFailure):
    pass


class DegenerateFit(NumericalFailure):
    pass
