"""Exception types shared across the package.

The CLI maps these to exit codes: validation failure -> 2, capacity -> 3,
input error -> 4.
"""


class RfimError(Exception):
    """Base class for package errors."""


class InputError(RfimError, ValueError):
    """Malformed or out-of-domain input."""


class CapacityError(RfimError):
    """Request exceeds a hard enumeration cap."""


class ValidationFailure(RfimError):
    """A requested validation did not meet its threshold."""
