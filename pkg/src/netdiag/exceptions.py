"""Exception hierarchy shared by every netdiag module.

The CLI maps each family onto an exit code: configuration problems exit 2,
data problems exit 3, pipeline/modeling problems exit 4 and explain lookups
of rows that are not anomalies exit 5.
"""


class NetDiagError(Exception):
    """Root of all errors raised by this package."""

    exit_code = 4


# --- configuration -----------------------------------------------------------


class ConfigError(NetDiagError, ValueError):
    exit_code = 2


class SchemaError(ConfigError):
    """An AttributeSchema violates one of its invariants."""


class InvalidConfig(ConfigError):
    pass


# --- data --------------------------------------------------------------------


class DataError(NetDiagError, ValueError):
    exit_code = 3


class MissingColumn(DataError):
    def __init__(self, name):
        super().__init__(f"column {name!r} not found in CSV header")
        self.name = name


class EmptyFile(DataError):
    pass


class MalformedHeader(DataError):
    pass


class UnknownColumn(DataError):
    def __init__(self, name):
        super().__init__(f"unknown column {name!r}")
        self.name = name


class UnknownGroup(DataError):
    def __init__(self, name):
        super().__init__(f"unknown attribute group {name!r}")
        self.name = name


class AllRowsDropped(DataError):
    pass


class EmptyInput(DataError):
    pass


class IdMismatch(DataError):
    pass


# --- modeling ----------------------------------------------------------------


class ModelError(NetDiagError, ValueError):
    exit_code = 4


class QOutOfRange(ModelError):
    pass


class AllZero(ModelError):
    pass


class TooFewSamples(ModelError):
    pass


class ShapeMismatch(ModelError):
    pass


class MissingAttribute(ModelError, KeyError):
    def __init__(self, name):
        super().__init__(f"sample lacks attribute {name!r}")
        self.name = name

    def __str__(self):
        return self.args[0]


class LengthMismatch(ModelError):
    pass


class UnknownLabel(ModelError):
    pass


class InsufficientSamples(ModelError):
    pass


class TooFewRows(ModelError):
    pass


class SingleCluster(ModelError):
    pass


class EmptyRange(ModelError):
    pass


class NotBinary(ModelError):
    pass


class UnknownAttribute(ModelError):
    pass


class ColumnMismatch(ModelError):
    pass


class TooFewAnomalies(ModelError):
    pass


class SingleClass(ModelError):
    pass


class PipelineError(NetDiagError):
    """Wraps an error raised inside one pipeline step, tagging the step."""

    def __init__(self, step, cause):
        super().__init__(f"[{step}] {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4)


class UnknownRow(NetDiagError, LookupError):
    exit_code = 5
