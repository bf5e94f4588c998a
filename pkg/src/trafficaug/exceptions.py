"""Exception hierarchy shared across the toolkit.

The CLI maps these onto distinct exit codes: configuration problems,
input/output and file-format problems, and numeric failures during
training are kept apart so batch callers can react programmatically.
"""


class TrafficAugError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TrafficAugError):
    """Invalid or unknown run-configuration content."""


class IngestError(TrafficAugError):
    """A malformed packet row; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DatasetFormatError(TrafficAugError):
    """A flow-dataset, checkpoint, or bundle file violates its schema."""


class NoTcpPacketsError(TrafficAugError):
    """A class has no TCP flows, so no window-size corpus can be built."""


class DivergenceError(TrafficAugError):
    """Training produced a non-finite loss; carries the epoch index."""

    def __init__(self, epoch: int, message: str = "non-finite training loss"):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class NonFiniteGradientError(TrafficAugError):
    """An optimizer step received a non-finite gradient for a named parameter."""

    def __init__(self, param_name: str):
        super().__init__(f"non-finite gradient for parameter {param_name!r}")
        self.param_name = param_name


class StageError(TrafficAugError):
    """Wraps an error raised inside a named experiment stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
