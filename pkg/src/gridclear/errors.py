"""Exception types shared across the package.

Every error raised on a user-facing path derives from :class:`GridclearError`
so callers can catch one base class at the CLI boundary.
"""


class GridclearError(Exception):
    """Base class for all package errors."""


class SchemaError(GridclearError):
    """A document is malformed: wrong tag, missing field, bad value type."""


class TopologyError(GridclearError):
    """The line graph is not a tree rooted at a single head bus."""


class ShapeError(GridclearError):
    """An array argument has the wrong shape for the feeder it refers to."""


class DomainError(GridclearError):
    """A numeric value is outside its admissible range."""


class ConfigError(GridclearError):
    """A scenario configuration is inconsistent or incomplete."""


class InfeasibleError(GridclearError):
    """A required optimization has no feasible point.

    `hint` names the constraint families whose removal restores
    feasibility, when a small set of culprits could be identified.
    """

    def __init__(self, message: str, hint: tuple = ()):
        super().__init__(message)
        self.hint = tuple(hint)


class StateError(GridclearError):
    """An operation was called before its inputs were computed."""


class InternalError(GridclearError):
    """An invariant the code relies on failed; indicates a bug, not bad input."""
