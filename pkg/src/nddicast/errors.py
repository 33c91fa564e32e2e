"""Exception hierarchy shared by every module of the toolkit."""


class NddiError(Exception):
    """Base class for all toolkit errors."""


class FormatError(NddiError):
    """A binary container has the wrong magic, version or layout."""


class ShapeError(NddiError, ValueError):
    """Array shapes are inconsistent with an operation's contract."""


class DataError(NddiError, ValueError):
    """Input data violates a value-level precondition (non-finite, too short, empty)."""


class MissingBand(NddiError, KeyError):
    """A spectral band required for an index is absent from a BandStack."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class KindError(NddiError, ValueError):
    """An IndexRaster of the wrong kind was passed."""


class MaskError(NddiError, ValueError):
    """A validity mask selects no pixels (or no SSIM windows)."""


class ConfigError(NddiError, ValueError):
    """Invalid configuration value."""


class DivergenceError(NddiError, ArithmeticError):
    """Training produced a non-finite loss."""


class IoError(NddiError, OSError):
    """An output location could not be written."""
