class ExtractError(Exception):
    """Base class for extraction failures."""


class AudioError(ExtractError):
    """One input file is unreadable or has the wrong format; the job skips
    it and continues."""


class ModelLoadError(ExtractError):
    """The SSL model cannot be loaded; the whole job aborts."""
