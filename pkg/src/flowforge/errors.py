"""Exception types shared across the package."""


class FlowforgeError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FlowforgeError, ValueError):
    """An argument violates a documented precondition."""


class InvalidConfigError(FlowforgeError, ValueError):
    """A configuration or scene file is malformed or inconsistent."""


class FileFormatError(FlowforgeError, ValueError):
    """A serialized file is corrupt or not in the expected format."""


class RangeError(FlowforgeError, ValueError):
    """A value falls outside the encodable range of a file format."""


class UndefinedScoreError(FlowforgeError, ValueError):
    """A score is requested over an empty domain."""
