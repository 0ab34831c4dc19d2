"""Exception hierarchy shared across the toolkit.

Every error class carries a distinct CLI exit code so scripted callers can
tell failure modes apart without parsing stderr.
"""


class CSCodecError(Exception):
    exit_code = 1


class ZeroMeasurementsError(CSCodecError):
    """floor(ratio * block_size^2) is zero; no measurement rows exist."""

    exit_code = 3


class TooManyFiltersError(CSCodecError):
    """More filters requested than distinct window positions available."""

    exit_code = 4


class ShapeMismatchError(CSCodecError):
    exit_code = 5


class DegenerateFilterError(CSCodecError):
    """All retained entries of a filter are zero; normalization undefined."""

    exit_code = 6


class BadDimensionsError(CSCodecError):
    """Image dimensions not divisible by the block size."""

    exit_code = 7


class BadPlaneShapeError(CSCodecError):
    exit_code = 8


class CodecUnavailableError(CSCodecError):
    """Requested codec backend (or its external binary) is not present."""

    exit_code = 9


class CodecFailureError(CSCodecError):
    """External codec process failed; carries its diagnostic output."""

    exit_code = 10

    def __init__(self, message, diagnostic=""):
        super().__init__(message)
        self.diagnostic = diagnostic


class CorruptContainerError(CSCodecError):
    exit_code = 11


class BadGeometryError(CSCodecError):
    exit_code = 12


class GeometryMismatchError(CSCodecError):
    """Measurement plane does not match the network configuration."""

    exit_code = 13


class NonFiniteLossError(CSCodecError):
    """Training loss became NaN/Inf; aborts with step diagnostics."""

    exit_code = 14


class TooSmallError(CSCodecError):
    exit_code = 15


class UnreachableRateError(CSCodecError):
    """Target bit rate outside the reachable range of the backend."""

    exit_code = 16


class ConfigError(CSCodecError):
    exit_code = 2
