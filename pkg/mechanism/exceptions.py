from primitives.exceptions import InputError, NoBracket, NumericalError  # noqa: F401


class InvalidParameters(InputError):
    pass


class NonMonotoneDemand(InputError):
    pass


class NonpositiveQuantity(InputError):
    pass


class ZeroDemand(InputError):
    pass


class CapNotBinding(InputError):
    pass


class PreconditionUnmet(InputError):
    """
    Hypotheses of the dominance comparison that do not hold.
    :param failed: list of human-readable hypothesis names
    """

    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__('precondition unmet: {0}'.format('; '.join(self.failed)))


class RevenueNeutralityViolation(NumericalError):
    pass
