"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command line layer can map it
without string matching: 2 for bad input, 3 for numerical trouble.
"""


class QSLError(Exception):
    exit_code = 2


class DimensionMismatch(QSLError, ValueError):
    pass


class InvalidState(QSLError, ValueError):
    """Matrix is not Hermitian, not unit trace, or not positive semidefinite."""


class ParseError(QSLError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConstraintViolated(QSLError, ValueError):
    """The alternative function broke ``f(x) >= x`` at a queried purity."""


class DegenerateGeometry(QSLError, ValueError):
    """``f(Tr rho^2) - 1/N`` is (numerically) zero; the embedding is undefined."""

    exit_code = 3


class NumericalError(QSLError, ArithmeticError):
    exit_code = 3


class NegativeRadicand(NumericalError):
    pass


class NonConvergence(NumericalError):
    def __init__(self, message, estimates=()):
        self.estimates = tuple(estimates)
        super().__init__(message)


class PSDViolation(InvalidState):
    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message)
