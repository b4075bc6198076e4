"""
Command-line entry point.

Exit codes: 0 success, 1 verification failure or runtime error, 2 usage
error (bad flags, malformed config or tensor files, missing or unreadable
files).
"""
import logging
import sys

from mambayolo import create_cli, set_thread_cap
from mambayolo.config import Config
from mambayolo.exceptions import (
    ConfigError, InputShapeError, MambaYoloError, TensorFormatError, UsageError,
)

logger = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_USAGE = 2

_USAGE_ERRORS = (UsageError, ConfigError, TensorFormatError, InputShapeError, OSError)


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, Config.LOG_LEVEL, logging.WARNING)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        force=True,
    )


def run(argv=None, out=None) -> int:
    """Parse argv, run the command, and return its exit code."""
    out = out if out is not None else sys.stdout
    parser = create_cli()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for bad usage
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    _configure_logging(args.verbose)
    if args.threads < 1:
        logger.error("--threads must be >= 1, got %d", args.threads)
        return EXIT_USAGE
    set_thread_cap(args.threads)

    try:
        return args.handler(args, out)
    except _USAGE_ERRORS as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except MambaYoloError as exc:
        logger.error("%s: %s", args.command, exc)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())
