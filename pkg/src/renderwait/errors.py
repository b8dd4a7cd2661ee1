"""Exception types shared across the package."""


class RenderWaitError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class InvalidArgument(RenderWaitError, ValueError):
    pass


class FormatError(RenderWaitError):
    """A file does not match its expected on-disk format."""


class RecordError(RenderWaitError):
    """A scenario cannot be executed even with perfect waiting."""
