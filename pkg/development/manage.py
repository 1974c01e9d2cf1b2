#!/usr/bin/env python
"""Run the ptycho_prior experiment commands (simulate, reconstruct, epie, evaluate, sweep)."""

import os
import sys


def main():
    """Dispatch to a management command using the development settings."""
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "development.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        msg = "Django is required to run the experiment commands; install the package with `pip install -e .`"
        raise ImportError(msg) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
