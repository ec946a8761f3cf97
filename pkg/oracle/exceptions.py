from laip.exceptions import LAIPError


class InvalidBelief(LAIPError, ValueError):
    """A believed-open probability lies outside [0, 1]."""


class NoViableGoal(LAIPError):
    """The agent has no action at all from its current room."""


class IllegalTrajectory(LAIPError):
    """The trajectory cannot be replayed in its own world."""
