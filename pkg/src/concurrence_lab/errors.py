"""Exception hierarchy shared by all modules."""


class ConcurrenceLabError(Exception):
    """Base class for library errors."""


class DimensionMismatch(ConcurrenceLabError, ValueError):
    pass


class InvalidSpec(ConcurrenceLabError, ValueError):
    """Coefficients violate a structural constraint (symmetry, zero sum, ...)."""


class NotPositive(InvalidSpec):
    """Some p coefficient is negative: alpha lies outside the admissible cone."""


class ZeroSpec(InvalidSpec):
    pass


class NegativeRadicand(ConcurrenceLabError, ArithmeticError):
    pass


class Inapplicable(ConcurrenceLabError):
    """An analytic construction does not apply to the given spec."""


class NotPSD(ConcurrenceLabError, ValueError):
    pass


class NotIsometry(ConcurrenceLabError, ValueError):
    pass


class SpecNotSufficient(ConcurrenceLabError):
    pass
