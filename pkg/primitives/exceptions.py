"""
Exception tree shared by every app.

``InputError`` covers anything the caller can fix (bad parameters, schema,
config, files) and maps to exit code 2. ``NumericalError`` covers failures of
the numerics themselves and maps to exit code 3.
"""


class LabError(Exception):
    """
    Root of all errors raised by subsidy-lab
    """
    exit_code = 1


class InputError(LabError, ValueError):
    exit_code = 2


class NumericalError(LabError, ArithmeticError):
    exit_code = 3


class DimensionMismatch(InputError):
    pass


class NonFiniteInput(InputError):
    pass


class NonpositiveValues(InputError):
    pass


class NonpositiveP(NonpositiveValues):
    pass


class RankDeficient(NumericalError):
    """
    Design matrix does not have full column rank.
    :param dropped_columns: names of the columns that are linear combinations of earlier ones
    """

    def __init__(self, message, dropped_columns=()):
        super().__init__(message)
        self.dropped_columns = tuple(dropped_columns)


class SingleCluster(NumericalError):
    pass


class Separation(NumericalError):
    pass


class NoVariation(InputError):
    pass


class SpanTooSmall(NumericalError):
    pass


class NoBracket(NumericalError):
    pass
