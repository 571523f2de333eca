"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition (shape, range, format)."""


class DegenerateInputError(ValidationError):
    """Numerically degenerate input, e.g. a zero-norm rotation column."""


class FullyMaskedRowError(ValidationError):
    """An attention query row has no unmasked key to attend to."""


class FormatError(ValidationError):
    """A binary file or manifest does not conform to its declared format."""


class TrainingDivergedError(RuntimeError):
    """A loss became non-finite; carries the last loss report for diagnosis."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
