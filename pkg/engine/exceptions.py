from typing import Sequence

from laip.exceptions import LAIPError


class RunAborted(LAIPError):
    """A step failed; ``steps`` holds the records emitted before it."""

    def __init__(self, message: str = '', steps: Sequence = ()):
        super().__init__(message)
        self.steps = list(steps)
