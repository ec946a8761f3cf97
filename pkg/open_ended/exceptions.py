from laip.exceptions import LAIPError


class UnknownScenario(LAIPError):
    """No scenario file matches the requested id or path."""
