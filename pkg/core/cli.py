"""
Command-line dispatch for manage.py.

The HSDT subcommands are Django management commands; anything else Django
knows (runserver, test, check, ...) is passed through unchanged.
"""
import sys

from django.core.management import execute_from_command_line, get_commands, load_command_class

HSDT_COMMANDS = {
    'simulate': 'apply a noise spec to an HSI; writes the noisy HSI and its degradation log',
    'train': 'train a model from a config and a dataset; writes a checkpoint and the loss curve',
    'denoise': 'restore a noisy HSI with a trained checkpoint',
    'eval': 'PSNR, SSIM and SAM of an estimate against a reference',
    'params': 'total parameter count and per-tensor table of a config',
    'gradcheck': 'finite-difference gradient suite; nonzero exit on failure',
    'pnp': 'plug-and-play ADMM restoration of an SR or CASSI observation',
    'attnmap': 'dump the band attention map of every block',
}

USAGE = """usage: manage.py <command> [options]

commands:
{commands}

Run 'manage.py <command> --help' for the options of a command.
Django commands (runserver, test, check, ...) are also available.
"""


def usage():
    width = max(len(name) for name in HSDT_COMMANDS)
    commands = '\n'.join(f"  {name.ljust(width)}  {text}" for name, text in HSDT_COMMANDS.items())
    return USAGE.format(commands=commands)


def dispatch(argv, prog='manage.py'):
    """
    Run one subcommand.

    Args:
        argv (list[str]): Arguments after the program name.

    Returns:
        int: 0 on success, 1 on an operational failure, 2 on a usage error.
    """
    if not argv or argv[0] in ('-h', '--help', 'help'):
        sys.stdout.write(usage())
        return 0 if argv else 2

    name = argv[0]
    commands = get_commands()
    if name not in commands:
        sys.stderr.write(f"Unknown command: '{name}'\n\n{usage()}")
        return 2
    try:
        if name in HSDT_COMMANDS:
            command = load_command_class(commands[name], name)
            command.run_from_argv([prog, name, *argv[1:]])
        else:
            execute_from_command_line([prog, *argv])
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 1
    return 0
