class ActnetError(Exception):
    """Base class for errors raised by actnet."""


class DimensionError(ActnetError, ValueError):
    pass


class GeometryError(ActnetError, ValueError):
    pass


class SpecError(ActnetError, ValueError):
    """Invalid model description or configuration."""


class DataFormatError(ActnetError, ValueError):
    """A dataset file does not follow its container format."""


class DivergenceError(ActnetError, FloatingPointError):
    """A loss or gradient became non-finite."""
