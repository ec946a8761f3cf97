class LAIPError(Exception):
    """Base class for every error raised by the LAIP apps."""


class SimplexError(LAIPError, ValueError):
    """A vector that should be a probability distribution is not one."""


class DimensionMismatch(LAIPError, ValueError):
    """Two vectors or matrices that must line up do not."""


class DegeneratePosterior(LAIPError):
    """Every hypothesis received zero evidence, so nothing can be normalized."""


class DegenerateInput(LAIPError, ValueError):
    """A statistic is undefined for the given input (constant vector, zero variance)."""
