"""Exception hierarchy shared by all riccert modules."""


class RiccertError(Exception):
    """Base class for every error raised by the toolkit."""


class ParseError(RiccertError, ValueError):
    """Malformed formula text. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


class DomainError(RiccertError, ArithmeticError):
    """An expression was evaluated outside its domain."""

    def __init__(self, message, node=None, t=None):
        where = "" if t is None else f" at t={t!r}"
        super().__init__(f"{message}{where}")
        self.node = node
        self.t = t


class NonDifferentiableError(RiccertError):
    def __init__(self, node):
        super().__init__(f"cannot differentiate through {node}")
        self.node = node


class DegenerateError(RiccertError):
    """A quantity that must stay away from zero vanished (e.g. a(t) = 0)."""


class PreconditionError(RiccertError):
    """An operation's documented precondition does not hold."""

    def __init__(self, condition, message):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


class OutOfRangeError(RiccertError, ValueError):
    pass


class SpanMismatchError(RiccertError, ValueError):
    pass


class InadmissibleError(RiccertError):
    """Initial data do not satisfy the comparison precondition."""


class EmptyRegionError(RiccertError):
    pass


class UnsupportedTheoremError(RiccertError, KeyError):
    pass


class MissingComparisonError(RiccertError):
    pass


class StalledError(RiccertError):
    """Integration stalled (step size underflow without norm growth)."""
