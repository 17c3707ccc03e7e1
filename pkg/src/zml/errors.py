"""Exception hierarchy shared by all numerical modules."""


class ZmlError(Exception):
    """Base class for numerical failures (CLI exit status 3)."""


class PoleError(ZmlError, ValueError):
    pass


class DomainError(ZmlError, ValueError):
    pass


class ConvergenceError(ZmlError, ArithmeticError):
    pass


class PrecisionError(ZmlError, ArithmeticError):
    """Requested tolerance cannot be met within the evaluation budget."""


class IllConditionedError(ZmlError, ArithmeticError):
    pass


class InfeasibleError(ZmlError, ValueError):
    pass


class DataError(ZmlError, ValueError):
    """Malformed external data (cache or spectral table)."""
