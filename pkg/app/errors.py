"""
Exception hierarchy for the iris pipeline.

Data-shaped errors also derive from ValueError so plain `except ValueError`
call sites keep working.
"""


class IrisError(Exception):
    """Base class for every pipeline error"""


class ImageError(IrisError, ValueError):
    """Unreadable, unsupported or empty image"""


class GeometryError(IrisError, ValueError):
    """Degenerate circle geometry or failed circle detection"""


class EnhanceError(IrisError, ValueError):
    """Filter preconditions violated (image smaller than the PSF kernel)"""


class BinarizeError(IrisError, ValueError):
    pass


class ContourError(IrisError, ValueError):
    pass


class ShapeCodeError(IrisError, ValueError):
    """Wrong object count or samples outside [0, 1]"""


class CodeFormatError(IrisError, ValueError):
    """Malformed shape-code byte stream"""


class BadMagicError(CodeFormatError):
    pass


class VersionMismatchError(CodeFormatError):
    pass


class TruncatedPayloadError(CodeFormatError):
    pass


class ChecksumError(CodeFormatError):
    pass


class DimensionMismatchError(IrisError, ValueError):
    pass


class ManifestError(IrisError, ValueError):
    pass


class ScenarioError(IrisError, ValueError):
    pass


class PairingError(ScenarioError):
    """FUSED evaluation without matching VL/NIR image slots"""


class GalleryError(IrisError, ValueError):
    """Empty gallery, or nothing left after filtering degraded codes"""


class ConfigError(IrisError, ValueError):
    """Missing or unparsable configuration file"""
