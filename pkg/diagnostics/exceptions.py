from primitives.exceptions import InputError, NumericalError


class NoControlGroup(InputError):
    """
    The restricted sample has no untreated HCP to measure the control trend.
    """


class EmptyAfterRestriction(InputError):
    pass


class DegenerateDenominator(NumericalError):
    """
    Short and long models explain the same share of variation, so the
    bias-adjusted coefficient is undefined.
    """
