"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for malformed or
out-of-range inputs, and :class:`NumericalError` for computations that cannot
be carried out reliably (divergence, ill-conditioning, size limits).
"""


class AsyncLtiError(Exception):
    """Base class for all package errors."""


class ValidationError(AsyncLtiError, ValueError):
    """Input data violates a type invariant or cannot be parsed."""


class NumericalError(AsyncLtiError, ArithmeticError):
    """A numerical stage failed.

    ``stage`` names the pipeline step that raised, so callers such as the
    command line can report where things went wrong.
    """

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class NotMeanSquareStable(NumericalError):
    pass


class OperatorTooLarge(NumericalError):
    pass


class IllConditioned(NumericalError):
    def __init__(self, message, cond=None, stage=None):
        super().__init__(message, stage=stage)
        self.cond = cond


class Unidentifiable(NumericalError):
    pass


class SimulationDiverged(NumericalError):
    """State norm crossed the overflow guard.

    ``partial`` holds the trajectory up to (and including) the offending step.
    """

    def __init__(self, message, partial=None, step=None, stage="simulate"):
        super().__init__(message, stage=stage)
        self.partial = partial
        self.step = step
