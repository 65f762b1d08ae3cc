"""Exception types shared across the package."""


class MvspError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MvspError):
    """A data invariant failed. `field` names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnknownNodeError(MvspError):
    """A node identifier does not exist in the topology."""


class UnreachableError(MvspError):
    """No path exists between the requested pair of nodes."""


class ConfigurationError(MvspError):
    """A configuration value is unusable (e.g. empty tangent set)."""


class GuardExceededError(MvspError):
    """A brute-force search space exceeds the enumeration guard."""


class ParseError(MvspError):
    """A file or text payload could not be parsed."""


class IntegrityError(MvspError):
    """An imported value is inconsistent with the model (bounds/integrality)."""
