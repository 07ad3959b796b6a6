"""Exception types raised by ssdkit.

All library-specific failures derive from SsdError so callers can catch one
base class.  Shape and value problems also subclass ValueError, matching what
plain numpy code would raise.
"""


class SsdError(Exception):
    """Base class for all ssdkit errors."""


class DimensionError(SsdError, ValueError):
    """Array extents are inconsistent with each other or with a declared dim."""


class ValidationError(SsdError, ValueError):
    """A value constraint is violated (non-finite input, empty sequence,
    non-positive transition, chunk size not dividing a vertical block, ...)."""


class CapacityError(SsdError, ValueError):
    """A requested computation exceeds a configured materialization limit."""


class FormatError(SsdError, ValueError):
    """A serialized artifact is structurally malformed (truncated payload,
    header/payload length mismatch, unparseable header)."""


class IntegrityError(SsdError):
    """A serialized artifact is well-formed but its checksum does not match."""
