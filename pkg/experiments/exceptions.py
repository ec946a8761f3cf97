from laip.exceptions import LAIPError


class AlignmentError(LAIPError):
    """Model hypotheses cannot be mapped onto the oracle's preference orderings."""


class EmptySelection(LAIPError):
    """No stored runs match the requested batch or filter."""
