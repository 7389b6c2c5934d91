"""Exception types shared across the toolkit."""


class Blueprint3dError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(Blueprint3dError):
    """An image or grid is too small (or mis-shaped) for the requested operation."""


class RangeError(Blueprint3dError):
    """A coordinate or parameter lies outside its documented domain."""


class DecodeError(Blueprint3dError):
    """A byte stream could not be decoded.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class MeshParseError(Blueprint3dError):
    """A mesh file could not be parsed; carries the 1-based line (text) or byte offset (binary)."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        where = f"line {line}" if line is not None else f"byte offset {offset}"
        super().__init__(f"{message} ({where})")
        self.line = line
        self.offset = offset


class DegenerateMesh(Blueprint3dError):
    """Mesh has no usable extent (empty, single point, or zero length)."""


class CutFailed(Blueprint3dError):
    """Blank-run line cutting could not produce the expected number of regions."""


class IdentificationFailed(Blueprint3dError):
    """Fewer candidate boxes than the four views that need to be identified."""


class TieUnresolved(Blueprint3dError):
    """View identification hit an exact size tie; carries the tied candidate boxes."""

    def __init__(self, message: str, candidates):
        super().__init__(message)
        self.candidates = list(candidates)


class ManualRequired(Blueprint3dError):
    """Automatic view extraction failed; a human must supply the boxes."""


class EmptyHull(Blueprint3dError):
    """Silhouette carving removed every voxel."""


class SizeMismatch(Blueprint3dError):
    """Blueprint resolution is outside the band the trained weights support."""


class ConfigMismatch(Blueprint3dError):
    """A checkpoint or file was produced under an incompatible configuration."""


class FormatError(Blueprint3dError):
    """A binary container (samples, checkpoint, grid dump) failed validation."""
