class DumperError(Exception):
    """Base class for dumper failures."""


class DumpJobError(DumperError):
    """A job's fields are inconsistent (mode, sizes, parameters)."""


class TokenNotFoundError(DumperError):
    """An object word does not appear in the tokenized prompt."""


class ImageSizeError(DumperError):
    """An input or control image is not 512x512."""


class BackendUnavailableError(DumperError):
    """The requested diffusion backend cannot be loaded."""
