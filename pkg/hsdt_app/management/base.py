import argparse
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from hsdt_app.api.serializers import render_json
from hsdt_app.exceptions import ConfigError, HsdtError


def comma_ints(value):
    """argparse type for 'H,W,D'-style extents."""
    try:
        return tuple(int(item) for item in value.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'")


def key_value(value):
    """argparse type for repeated `--option key=value` flags."""
    key, sep, item = value.partition('=')
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected key=value, got '{value}'")
    return key.strip(), item.strip()


class HsdtCommand(BaseCommand):
    """
    Management command that reports HsdtError as a CommandError (exit 1).

    Subclasses implement `run(**options)` instead of `handle`.
    """

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except ConfigError as exc:
            details = '; '.join(f"{key}: {' '.join(messages)}" for key, messages in exc.errors.items())
            raise CommandError(f"{exc} {details}".strip())
        except (HsdtError, OSError) as exc:
            raise CommandError(str(exc))

    def run(self, **options):
        raise NotImplementedError

    def write_json(self, data, path=None):
        """Indented JSON to `path`, or to stdout when no path is given."""
        payload = render_json(data)
        if path:
            Path(path).write_bytes(payload + b'\n')
        else:
            self.stdout.write(payload.decode('utf-8'))
