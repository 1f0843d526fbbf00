import numpy as np
from django.core.management.base import BaseCommand, CommandError

from primitives.exceptions import LabError


def comma_list(value):
    return tuple(part.strip() for part in value.split(',') if part.strip())


def float_list(value):
    """
    Comma-separated floats, or start:stop:num for an evenly spaced grid.
    """
    try:
        if ':' in value:
            start, stop, num = value.split(':')
            return tuple(np.round(np.linspace(float(start), float(stop), int(num)), 12))
        return tuple(float(part) for part in comma_list(value))
    except ValueError as exc:
        raise CommandError('cannot read {0!r} as numbers'.format(value), returncode=2) from exc


class LabCommand(BaseCommand):
    """
    Base for the subsidy-lab commands: a LabError becomes a CommandError
    carrying the error's exit code.
    """

    def run(self, *args, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            return self.run(*args, **options)
        except LabError as exc:
            raise CommandError('{0}: {1}'.format(type(exc).__name__, exc), returncode=exc.exit_code) from exc
