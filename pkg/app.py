# app.py - Entry point: runs the CLI and maps library errors to exit codes
import json
import logging
import sys
from typing import List, Optional

import click
from dotenv import load_dotenv

from config.constants import SCHEMA_VERSION
from core.errors import GSpectralError, RegressivityError
from frontend.cli import cli

# Load environment variables (GSPECTRAL_TOL, GSPECTRAL_WORKERS, GSPECTRAL_LOG_LEVEL)
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_H1 = 2


def _report(error: str, message: str, **extra) -> None:
    """Structured error on stderr"""
    payload = {"schema_version": SCHEMA_VERSION, "error": error, "message": message, **extra}
    click.echo(json.dumps(payload, sort_keys=True), err=True)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code"""
    try:
        result = cli.main(args=argv, prog_name="gspectral", standalone_mode=False)
        return result if isinstance(result, int) else EXIT_OK
    except RegressivityError as exc:
        payload = {"schema_version": SCHEMA_VERSION, **exc.to_dict()}
        click.echo(json.dumps(payload, sort_keys=True), err=True)
        return EXIT_H1
    except click.ClickException as exc:
        _report("usage", exc.format_message())
        return EXIT_ERROR
    except click.Abort:
        _report("aborted", "interrupted")
        return EXIT_ERROR
    except (GSpectralError, ValueError) as exc:
        logger.debug("command failed", exc_info=True)
        _report(type(exc).__name__, str(exc))
        return EXIT_ERROR
    except OSError as exc:
        _report("io", str(exc))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
