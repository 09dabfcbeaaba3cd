"""Exception types shared across the toolkit.

ValidationError covers bad inputs and broken preconditions (CLI exit 1);
anything else that escapes is treated as a runtime error (CLI exit 2).
"""


class ValidationError(ValueError):
    """Input data or arguments violate a documented precondition."""


class ParseError(ValidationError):
    """A file could not be parsed; message names the offending line."""
