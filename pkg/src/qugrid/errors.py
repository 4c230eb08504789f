"""Exception types shared across the simulator."""


class QugridError(Exception):
    """Base class for all simulator errors."""


class PastEvent(QugridError):
    """An event was scheduled before the current simulation time."""


class UnknownStream(QugridError):
    """A random stream label was requested that was never registered."""


class DomainError(QugridError, ValueError):
    """An argument fell outside the mathematical domain of an operation."""


class TooFewNodes(QugridError, ValueError):
    """Node count too small for the requested topology."""


class Unreachable(QugridError):
    """No route exists between the requested endpoints."""


class InvalidWindows(QugridError, ValueError):
    """Attack windows overlap, are reversed, or fall outside the horizon."""


class RankDeficient(QugridError, ValueError):
    """The measurement map does not have full column rank."""


class EmptyInput(QugridError, ValueError):
    """An aggregate was requested over an empty collection."""


class ValidationError(QugridError, ValueError):
    """A scenario file failed validation.

    `path` addresses the offending field, e.g. "links.loss_prob".
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class ParseError(QugridError, ValueError):
    """A scenario file could not be parsed at all."""


class IoError(QugridError, OSError):
    """An output location could not be written."""
