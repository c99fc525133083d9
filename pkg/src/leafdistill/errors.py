"""Exception types shared by the library and the CLI."""


class LeafDistillError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(LeafDistillError, ValueError):
    """A caller-supplied argument violates an operation's contract."""


class SchemaError(LeafDistillError):
    """Input file structure does not match the declared schema."""


class ParseError(LeafDistillError):
    """A cell could not be parsed; carries the offending data row index."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class UndefinedMetricError(LeafDistillError):
    """The requested metric has no defined value for these inputs."""


class UnknownRegionError(LeafDistillError, LookupError):
    """A (tree_id, leaf_id) pair does not name any extracted region."""


class InternalError(LeafDistillError):
    """An internal invariant failed; indicates a bug, not a usage error."""


class ConfigError(LeafDistillError):
    """Experiment configuration is missing, malformed, or inconsistent."""


class StageError(LeafDistillError):
    """A pipeline stage could not run; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage
