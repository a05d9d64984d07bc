"""Exception types shared across the package."""


class NbvError(Exception):
    """Base class for all package errors."""


class InvalidInputError(NbvError, ValueError):
    """A caller violated an operation's precondition."""


class DegenerateSeedError(NbvError):
    """A candidate camera seed lies inside occupied geometry."""


class SceneGenerationError(NbvError):
    """A scene spec could not be realized (e.g. no free space left)."""


class RenderError(NbvError):
    """A depth render was requested from an invalid camera placement."""


class FormatError(NbvError):
    """A persisted binary artifact is corrupt or has the wrong version."""


class CacheFormatError(FormatError):
    """A persisted mask cache file is corrupt or has the wrong version."""
