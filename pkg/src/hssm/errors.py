"""Exception hierarchy.

Everything raised on purpose derives from :class:`HssmError`.  Parameter and
input problems also derive from ``ValueError`` so generic callers can catch
them without importing this module.
"""


class HssmError(Exception):
    pass


class InvalidParams(HssmError, ValueError):
    pass


class InvalidDiscount(InvalidParams):
    pass


class InvalidConcentration(InvalidParams):
    pass


class InvalidR(InvalidParams):
    pass


class InvalidBlocks(InvalidParams):
    pass


class EmptyCheckpoints(InvalidParams):
    pass


class TooSmall(InvalidParams):
    pass


class DomainTooSmall(InvalidParams):
    pass


class WrongCase(InvalidParams):
    pass


class EmptySample(InvalidParams):
    pass


class DegenerateBins(HssmError, ValueError):
    pass


class CapExceeded(HssmError, ValueError):
    pass


class NumericalFailure(HssmError, ArithmeticError):
    pass


class Overflow(NumericalFailure):
    pass


class ParseError(HssmError, ValueError):
    pass


class ValidationError(HssmError, ValueError):
    pass


class MalformedRow(HssmError, ValueError):
    pass


class DuplicateObservation(MalformedRow):
    pass
