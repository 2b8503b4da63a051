"""
Error handling for CLI commands: exception -> logged failure + exit code
"""
import functools
import logging
from typing import Any, Callable

import typer

from core.errors import EXIT_CONFIG, EXIT_NUMERICAL, LevyIMError
from utils.logging_setup import configure_logging

logger = logging.getLogger(__name__)


def exit_code_for(error: BaseException) -> int:
    """0 ok, 2 config/domain, 3 gap violation, 4 numerical or contract failure"""
    if isinstance(error, LevyIMError):
        return error.exit_code
    if isinstance(error, (ValueError, FileNotFoundError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def handle_errors(command: Callable[..., Any]) -> Callable[..., Any]:
    """Run a command, log any failure and turn it into typer.Exit with the mapped code"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except typer.Exit:
            raise
        except LevyIMError as e:
            code = exit_code_for(e)
            logger.error(f"{e.error_type} error: {e.message}")
            if e.details:
                logger.error(f"details: {e.details}")
            raise typer.Exit(code=code)
        except Exception as e:
            code = exit_code_for(e)
            logger.error(f"Unhandled error: {e}")
            raise typer.Exit(code=code)

    return wrapper


def setup_middleware(app: typer.Typer) -> None:
    """Install the global callback that configures logging before any command runs"""

    @app.callback()
    def configure(
        log_level: str = typer.Option("INFO", "--log-level", envvar="LEVY_IM_LOG_LEVEL", help="Logging level"),
    ) -> None:
        configure_logging(log_level)
