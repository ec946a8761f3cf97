from laip.exceptions import LAIPError


class UnknownRoom(LAIPError, KeyError):
    """The room is not part of the graph."""


class LegalActionError(LAIPError):
    """An action is not legal in the state it was taken from."""


class Unreachable(LAIPError):
    """No path connects the room to the restaurant."""


class UnknownTrajectory(LAIPError, KeyError):
    """The trajectory id is not in the corpus."""
