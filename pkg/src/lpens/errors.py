"""Exception types shared across the toolkit."""


class LpensError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(LpensError):
    """Operand shapes are incompatible."""


class ConfigError(LpensError):
    """Invalid configuration value or combination."""


class DataError(LpensError):
    """Dataset contents violate a precondition (e.g. label out of range)."""


class GeometryError(LpensError):
    """Degenerate anchor geometry (coincident or collinear points)."""


class FormatError(LpensError):
    """A file does not conform to the container format."""


class CorruptionError(LpensError):
    """A container file is truncated or internally inconsistent."""


class TrainingDivergedError(LpensError):
    """Training produced a non-finite loss."""
