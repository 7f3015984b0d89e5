"""Exception hierarchy shared across the toolkit."""


class UltronError(Exception):
    """Base class for all errors raised by this package."""


class MeshParseError(UltronError):
    """Malformed mesh file. Carries the line (text formats) or byte offset
    (binary formats) where parsing failed."""

    def __init__(self, message, *, line=None, offset=None):
        loc = ""
        if line is not None:
            loc = f" (line {line})"
        elif offset is not None:
            loc = f" (byte offset {offset})"
        super().__init__(message + loc)
        self.line = line
        self.offset = offset


class UnsupportedElementError(MeshParseError):
    """File is syntactically valid but uses a construct this toolkit does
    not model (polylines, big-endian PLY, non-per-vertex attribute
    indexing, ...)."""


class IndexOutOfRangeError(MeshParseError):
    """A face references a vertex index outside the declared vertex list."""


class InvalidMeshError(UltronError):
    """Mesh arrays violate the data-model invariants."""


class EmptyMeshError(UltronError):
    """Operation requires at least one triangle / vertex."""


class SolverError(UltronError):
    """Numerical failure inside the registration solver (non-finite
    energies, singular system that regularization could not fix)."""


class EdgebreakerUnsupported(UltronError):
    """Connectivity outside the traversal coder's domain (non-manifold,
    positive genus); callers fall back to raw index coding."""


class ContainerError(UltronError):
    """Bitstream-level failure: bad magic, unknown version, truncated or
    oversized payload, trailing bytes."""


class CorruptStreamError(ContainerError):
    """Entropy-coded payload failed its consistency checks while decoding."""
