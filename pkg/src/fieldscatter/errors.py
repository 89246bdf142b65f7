"""Exception types, each mapped to a CLI exit code."""


class FieldScatterError(Exception):
    exit_code = 1


class ConfigError(FieldScatterError, ValueError):
    exit_code = 2


class MissingArtifactError(FieldScatterError, FileNotFoundError):
    exit_code = 3


class NumericalError(FieldScatterError, FloatingPointError):
    exit_code = 4


class ConvergenceWarning(FieldScatterError, UserWarning):
    exit_code = 5


class FormatError(FieldScatterError, ValueError):
    """Corrupt, truncated or mismatched artifact file."""

    exit_code = 3
