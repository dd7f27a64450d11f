"""Exception types shared across the library.

The CLI maps these onto exit codes: input/format/config problems exit 2,
violated internal contracts exit 3.
"""


class SphereLocError(Exception):
    """Base class for all library errors."""


class InvalidInputError(SphereLocError):
    """Input data violates a precondition (non-finite samples, empty batch, ...)."""


class DegenerateInputError(InvalidInputError):
    """Input is technically valid but carries no usable signal (zero or constant)."""


class ShapeMismatchError(SphereLocError):
    """Operands disagree on band limit, channel count, or vector dimension."""


class FormatError(SphereLocError):
    """A file or byte stream does not match its documented layout."""


class OutOfBoundsError(SphereLocError):
    """A pose footprint lies entirely outside the map raster."""


class ConfigError(SphereLocError):
    """A configuration value is outside its allowed range or inconsistent."""


class ContractError(SphereLocError):
    """An internal invariant was violated; indicates a bug, not bad input."""
