"""Exception types shared across the package."""


class AlphamineError(Exception):
    """Base class for all library errors."""


class ParseError(AlphamineError):
    """Malformed expression text. Carries the character position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class ArityError(AlphamineError):
    """Operator called with the wrong number of arguments."""


class InvalidExpression(AlphamineError):
    """Token sequence is not a well-typed complete expression."""


class IoError(AlphamineError):
    """File could not be read or written."""


class SchemaError(AlphamineError):
    """Input file does not match the documented column schema."""


class DataError(AlphamineError):
    """Input rows violate panel integrity (bad numbers, duplicate keys)."""


class ArgumentError(AlphamineError):
    """Degenerate or out-of-range argument values."""


class EmptyOverlap(AlphamineError):
    """No trading day has enough jointly valid cells for a metric."""


class DegenerateTarget(AlphamineError):
    """No valid (alpha, return) pairs to fit pool weights against."""


class EvaluationError(AlphamineError):
    """Expression produced no usable values on the requested window."""


class EmptyPool(AlphamineError):
    """Operation requires at least one alpha in the pool."""


class TerminalState(AlphamineError):
    """Action requested on a finished episode."""


class IllegalAction(AlphamineError):
    """Action not in the legal set for the current state."""


class NonFiniteGradient(AlphamineError):
    """Gradient estimate contains NaN or infinite entries."""


class InsufficientUniverse(AlphamineError):
    """Fewer tradable stocks than the requested portfolio size."""


class ConfigError(AlphamineError):
    """Run configuration file is malformed or has unknown keys."""
