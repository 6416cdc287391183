"""Exception hierarchy.

Everything raised on purpose by the package derives from
:class:`WlanSenseError`. The CLI maps :class:`DataError` to exit code 1 and
:class:`ConfigurationError` to exit code 2.
"""


class WlanSenseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WlanSenseError, ValueError):
    """Invalid configuration, model/layout mismatch or impossible setup."""


class DomainError(ConfigurationError):
    """Argument outside the mathematical domain of an operation."""


class PreconditionError(ConfigurationError):
    """An operation was called with inputs violating its preconditions."""


class TrainingError(WlanSenseError, ValueError):
    """Model training could not proceed (e.g. single-class corpus)."""


class DataError(WlanSenseError, ValueError):
    """Malformed, non-finite or otherwise unusable measurement data."""


class DegenerateSampleError(DataError):
    """A statistic is undefined on the given samples (zero variance, zero RSS)."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ParseError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        if field is not None:
            message = f"field '{field}': {message}"
        super().__init__(message, line=line)


class StageError(DataError):
    """Error raised inside a pipeline stage, tagged with the stage and window."""

    def __init__(self, stage, window, cause):
        self.stage = stage
        self.window = window
        self.cause = cause
        super().__init__(f"stage '{stage}' failed at window {window}: {cause}")


class DeliveryError(WlanSenseError, ConnectionError):
    def __init__(self, message, dropped=0, report=None):
        self.dropped = dropped
        self.report = report
        super().__init__(f"{message} ({dropped} events dropped)")
