"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class NodalFieldError(Exception):
    exit_code = 1
    reason = "error"


class ParameterError(NodalFieldError, ValueError):
    exit_code = 6
    reason = "parameter"


class PreconditionError(NodalFieldError, ValueError):
    exit_code = 7
    reason = "precondition"


class RegimeError(NodalFieldError, ValueError):
    """Raised when an operation is called outside its s-vs-n/2 regime."""

    exit_code = 3
    reason = "regime"


class ResolutionError(NodalFieldError):
    exit_code = 4
    reason = "resolution"


class CapacityError(NodalFieldError):
    """Mode budget or oracle size exceeded."""

    exit_code = 5
    reason = "capacity"
