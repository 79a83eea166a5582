"""Exception hierarchy and the process exit codes the CLI maps it to."""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class GraphodexError(Exception):
    """Base class for every error raised by this package."""

    exit_code = EXIT_USAGE


class UsageError(GraphodexError):
    """Invalid arguments or misuse of an API contract."""

    exit_code = EXIT_USAGE


class ShapeError(UsageError):
    """Array dimensions violate an operation's contract."""


class DataError(GraphodexError):
    """Input data is missing, inconsistent, or insufficient."""

    exit_code = EXIT_DATA


class EmptyFormError(DataError):
    """A page contains no detectable ink."""


class SparseFormError(DataError):
    """Patch sampling exhausted its attempt budget before collecting
    enough patches above the ink-ratio threshold."""


class BalanceError(DataError):
    """Gender balancing is impossible (one class empty or indivisible)."""


class CheckpointError(DataError):
    """Checkpoint file is incompatible with the requested configuration."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint file is truncated, damaged, or not a checkpoint at all."""


class CapacityError(DataError):
    """Sample pool is too small to build an examiner session."""


class StateError(DataError):
    """Operation not valid in the session's current state."""


class NumericError(GraphodexError):
    """Non-finite values encountered, or training diverged."""

    exit_code = EXIT_NUMERIC


class IOFailure(GraphodexError):
    """A file could not be read or written."""

    exit_code = EXIT_IO


class ImageIOError(IOFailure):
    """Image file cannot be read."""


class ImageFormatError(ImageIOError):
    """Image file is not one of the supported 8-bit raster formats."""
