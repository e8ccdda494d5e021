"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 2, FormatError and
plain I/O failures -> 3, NumericalError -> 4.
"""


class ChorekitError(Exception):
    """Base class for all package errors."""


class ValidationError(ChorekitError, ValueError):
    """Caller-supplied values violate a documented precondition."""


class ShapeError(ValidationError):
    """Array shapes are inconsistent with an operation's contract."""


class FormatError(ChorekitError):
    """A byte stream does not conform to the MTDB container format."""


class NumericalError(ChorekitError):
    """A numerical procedure failed (non-finite values, degenerate input)."""


class DegenerateRotationError(NumericalError):
    """6D rotation input is too close to a degenerate configuration."""


class GraphBuildError(ValidationError):
    """An op-graph node was constructed with incompatible inputs."""
