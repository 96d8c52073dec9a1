"""Exception types shared across the library."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid dimensions."""


class GraphError(RuntimeError):
    """Autodiff graph misuse, e.g. backward on an unrecorded tensor."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class FormatError(ValueError):
    """Input file does not match the expected schema."""


class NumericsError(RuntimeError):
    """Numerical failure (singular system, non-finite loss, ...)."""
