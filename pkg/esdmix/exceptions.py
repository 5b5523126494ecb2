from typing import Optional


class EsdError(Exception):
    """Base class for all esdmix errors"""


class InvalidProblemError(EsdError, ValueError):
    """A problem definition violates one of its invariants"""


class DegenerateSpectrumError(InvalidProblemError):
    """The pooled eigenvalue list has no positive entry"""


class NumericError(EsdError, ArithmeticError):
    """An eigendecomposition or factorization failed"""

    def __init__(self, message: str, population: Optional[int] = None):
        super().__init__(message)
        self.population = population


class NearRealAxisBreakdown(NumericError):
    """The resolvent matrix is numerically singular at the requested abscissa"""


class SpecError(EsdError, ValueError):
    """A run spec could not be parsed or validated"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        context = []
        if key:
            context.append(f"key '{key}'")
        if line is not None:
            context.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(context)})" if context else message)
        self.key = key
        self.line = line
