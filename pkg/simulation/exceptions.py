from primitives.exceptions import InputError


class InvalidScenario(InputError):
    """
    Scenario settings outside the admissible range.
    :param problems: one message per offending field
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__('invalid scenario: {0}'.format('; '.join(self.problems)))


class RejectionLimit(InputError):
    pass


class EmptyHcp(InputError):
    pass
