from laip.exceptions import LAIPError


class ProviderError(LAIPError):
    """Base class for failures at the language-model boundary."""


class TransportError(ProviderError):
    """The backend could not be reached or failed server-side."""


class BackendRefusal(ProviderError):
    """The backend answered but produced no usable completion."""


class CacheMiss(ProviderError):
    """Replay mode found no recorded response for the request digest."""


class ParseFailure(LAIPError, ValueError):
    """A completion did not contain the structure the caller asked for."""

    def __init__(self, message: str = '', transcripts=None):
        super().__init__(message)
        self.transcripts = list(transcripts or [])
