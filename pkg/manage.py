#!/usr/bin/env python
"""Command-line entry point of the HSDT toolkit."""
import os
import sys


def main():
    """Run an HSDT or Django command."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')
    try:
        import django
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    django.setup()

    from core.cli import dispatch
    sys.exit(dispatch(sys.argv[1:], prog=os.path.basename(sys.argv[0])))


if __name__ == '__main__':
    main()
