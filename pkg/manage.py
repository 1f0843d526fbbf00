#!/usr/bin/env python
"""
Command-line entry point.

    python manage.py simulate --config scenario.ini --out output/sim
    python manage.py estimate --panel output/sim/panel.csv --method dml
    python manage.py diagnose --panel output/sim/panel.csv --battery manski,oster
    python manage.py replicate default
"""
import os
import sys


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'project.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
