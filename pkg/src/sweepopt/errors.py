"""Exception types shared across the package."""


class SweepError(Exception):
    pass


class DimensionMismatch(SweepError, ValueError):
    pass


class InfeasiblePoint(SweepError):
    """A state lies outside the moving set by more than the activity tolerance."""

    def __init__(self, message, violation=None, row=None):
        super().__init__(message)
        self.violation = violation
        self.row = row


class EmptySet(SweepError):
    pass


class NotFound(SweepError):
    pass


class DecompositionFailed(SweepError):
    def __init__(self, message, step=None, residual=None):
        super().__init__(message)
        self.step = step
        self.residual = residual


class IncompatibleReference(SweepError):
    pass


class NoFeasiblePoint(SweepError):
    def __init__(self, message, best_penalty=None):
        super().__init__(message)
        self.best_penalty = best_penalty


class LICQViolated(SweepError):
    pass


class SingularAdjointStep(SweepError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SpecParseError(SweepError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        super().__init__(message + where)
        self.line = line
        self.column = column
