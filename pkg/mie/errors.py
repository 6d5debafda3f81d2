"""Exception hierarchy shared by every module."""

from typing import Optional, Sequence


class MIEError(Exception):
    """Base class for all solver library errors."""


class InvalidArgumentError(MIEError, ValueError):
    """An argument violates a documented precondition on shape, range or index."""


class PreconditionError(MIEError):
    """A mathematical precondition of an operation does not hold for the instance."""


class DomainExitError(MIEError):
    """A value handed to the driver (or produced by a solver) left the domain D."""

    def __init__(self, node: int, state: int, value: Sequence[float], message: Optional[str] = None):
        self.node = int(node)
        self.state = int(state)
        self.value = [float(v) for v in value]
        super().__init__(message or f"value {self.value} at node {self.node}, state {self.state} is outside the domain")


class CapacityError(MIEError):
    """A construction would exceed its configured size budget."""

    def __init__(self, required: int, budget: int):
        self.required = int(required)
        self.budget = int(budget)
        super().__init__(f"requires {self.required} states, budget is {self.budget}")


class ConfigError(MIEError):
    """A scenario file or flag override could not be parsed or validated."""
