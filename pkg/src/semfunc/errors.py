"""Exception hierarchy shared by the library and the CLI."""


class SemfuncError(Exception):
    """Base class for all library errors."""


class InputError(SemfuncError, ValueError):
    """Malformed or inconsistent user input (bad shapes, unknown ids, bad files)."""


class DegenerateDistributionError(SemfuncError, ArithmeticError):
    pass


class TractabilityError(SemfuncError):
    """Exact enumeration would exceed the configured budget."""


class UndefinedConditionalError(SemfuncError, ArithmeticError):
    """The conditioning event has probability zero (no existential import)."""


class ConfigurationError(SemfuncError, ValueError):
    pass


class TrainingDivergedError(SemfuncError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class UndefinedCorrelationError(SemfuncError, ArithmeticError):
    """A rank correlation was requested for a list with no rank variance."""
