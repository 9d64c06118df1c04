"""Exception types shared across the toolkit."""


class LskError(Exception):
    """Base class for all toolkit errors."""


class InvalidShapeError(LskError, ValueError):
    """A shape is structurally invalid (zero dim, kernel larger than input, ...)."""


class ShapeMismatchError(LskError, ValueError):
    """Two operands have incompatible shapes."""


class InvalidRangeError(LskError, ValueError):
    """A numeric argument is outside its allowed range."""


class InvalidLayerError(LskError, ValueError):
    """A layer or layer pair violates its structural invariants."""


class InvalidSpecError(LskError, ValueError):
    """A model spec cannot be built or is unknown."""


class ConfigError(LskError, ValueError):
    """A config file is malformed; message carries the offending line number."""


class UnsupportedFormatError(LskError, ValueError):
    """An input file is not an 8-bit gray/RGB PNG."""


class CheckpointFormatError(LskError, ValueError):
    """A checkpoint file is corrupt or has an unknown version."""


class DivergenceError(LskError, RuntimeError):
    """Training produced a non-finite loss."""
