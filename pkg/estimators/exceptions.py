from primitives.exceptions import InputError, NumericalError


class NoSwitchers(InputError):
    """
    Neither switching margin has a treated HCP.
    """


class UnbalancedPanelForFD(InputError):
    pass


class FoldTooSmall(InputError):
    pass


class NuisanceFitFailure(NumericalError):
    """
    A nuisance learner failed on one cross-fitting fold.
    :param fold: index of the held-out fold
    """

    def __init__(self, message, fold):
        super().__init__('fold {0}: {1}'.format(fold, message))
        self.fold = fold
