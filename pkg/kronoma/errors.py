"""Error taxonomy shared by every kronoma module.

Two families map onto CLI exit codes: ``ValidationError`` (2) for inputs that
are malformed, ``InfeasibleError`` (3) for well-formed requests that cannot be
served at desk scale.
"""

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3


class KronomaError(ValueError):
    """Base class; subclassing ValueError keeps plain ``except ValueError`` working."""

    exit_code = EXIT_VALIDATION


class ValidationError(KronomaError):
    exit_code = EXIT_VALIDATION


class InfeasibleError(KronomaError):
    exit_code = EXIT_INFEASIBLE


class DimensionMismatchError(ValidationError):
    pass


class IndexOutOfRangeError(ValidationError):
    pass


class InvalidPolicyError(ValidationError):
    pass


class ZeroGainError(ValidationError):
    pass


class PatternFileError(ValidationError):
    pass


class DimensionOverflowError(InfeasibleError):
    pass


class InfeasibleDimsError(InfeasibleError):
    pass


class EnumerationCapExceededError(InfeasibleError):
    pass


class NoValidDesignError(InfeasibleError):
    pass


class SearchSpaceCapExceededError(InfeasibleError):
    pass


class NoiselessInfeasibleError(InfeasibleError):
    """No zero-residual assignment exists; carries where in the recursion it happened."""

    def __init__(self, message: str, level: int | None = None, path: tuple[int, ...] = ()):
        self.level = level
        self.path = tuple(path)
        if level is not None:
            message = f"{message} (recursion {level}, path {self.path})"
        super().__init__(message)
