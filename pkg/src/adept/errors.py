"""Exception hierarchy shared by every stage of the pipeline."""


class AdeptError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AdeptError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(AdeptError, ValueError):
    """A documented precondition was violated by the caller."""


class GraphError(AdeptError, RuntimeError):
    """Misuse of the autodiff graph (e.g. a second backward pass)."""


class DataError(AdeptError):
    """Input data could not be read or is unusable."""


class ParseError(DataError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDatasetError(DataError, ValueError):
    pass


class UnknownLabelError(AdeptError, KeyError):
    """A label outside the closed label vocabulary was requested."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown label"


class ConfigError(AdeptError, ValueError):
    pass


class PipelineError(AdeptError, RuntimeError):
    pass


class CheckpointError(AdeptError, ValueError):
    pass
