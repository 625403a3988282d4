"""Exception hierarchy shared by all engine modules."""


class PacaError(Exception):
    """Base class for every error raised by this package."""


class RasterShapeError(PacaError):
    """Raster header dimensions disagree with the number of values."""


class RasterRangeError(PacaError):
    """A raster value is outside the allowed range (or not finite)."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"raster value {value!r} at flat index {index} out of range")


class ScheduleRangeError(PacaError):
    """A noise-schedule beta lies outside [0, 1)."""


class TimestepError(PacaError):
    """A diffusion timestep is outside the valid range for the operation."""


class DimensionError(PacaError):
    """Matrix operands have incompatible dimensions."""


class EmptyInputError(PacaError):
    """An aggregate operation received no inputs."""


class ShapeError(PacaError):
    """Two rasters that must share a shape do not."""


class EmptyRepresentationError(PacaError):
    """An object representation has no qualifying pixels."""


class DegenerateSetError(PacaError):
    """A point set is unusable for registration (e.g. empty)."""


class DegenerateSetWarning(UserWarning):
    """Rotation is unobservable; a translation-only transform was returned."""


class DegenerateDepthError(PacaError):
    """Masked estimated depth is constant; scale is unidentifiable."""


class InvalidDepthError(PacaError):
    """A depth sample fell on a masked-out or non-positive value."""


class MetricInputError(PacaError):
    """A matching-accuracy count pair violates 0 <= n_acc <= n_total, n_total >= 1."""


class FormatError(PacaError):
    """A dump container is malformed; `offset` is the failing byte position."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ManifestMismatchError(PacaError):
    """A sidecar manifest disagrees with its dump container."""


class VocabularyError(PacaError):
    """Goal and real dumps share no object words."""


class DatasetFormatError(PacaError):
    """An evaluation dataset directory or manifest is malformed."""


class ConfigError(PacaError):
    """A run-config file is malformed or violates its invariants."""
