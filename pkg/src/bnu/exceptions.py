"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A distribution or model parameter is outside its valid range."""


class ContractError(ValueError):
    """An argument violates a documented precondition (shape, simplex, ...)."""


class InputError(ValueError):
    """Observed data or configuration is unusable for inference."""


class ParseError(ValueError):
    """A matrix or configuration file could not be parsed.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending line, when known.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
