"""Exception hierarchy. Each category carries the CLI exit code it maps to."""


class GmmSceneError(Exception):
    exit_code = 1


class InputError(GmmSceneError, ValueError):
    """Caller passed arguments that violate an operation's preconditions."""

    exit_code = 3


class FormatError(InputError):
    exit_code = 3


class UnsupportedError(InputError):
    exit_code = 3


class ParseError(InputError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(InputError):
    pass


class DimensionError(InputError):
    exit_code = 3


class DomainError(InputError):
    exit_code = 3


class TooShortError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class DataError(GmmSceneError, ValueError):
    """Numerically unusable data (non-finite, too few points, degenerate)."""

    exit_code = 5


class InsufficientDataError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


class LabelError(DataError):
    pass


class ConfigError(GmmSceneError, ValueError):
    exit_code = 4


class PipelineIOError(GmmSceneError, OSError):
    exit_code = 6
