"""
Console logging with per-level colours
"""
import logging
import sys

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class ColoredFormatter(logging.Formatter):
    """Custom formatter to add colors to log levels"""

    # ANSI color codes
    COLORS = {
        'DEBUG': '\033[36m',    # Cyan
        'INFO': '\033[32m',     # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',    # Red
        'CRITICAL': '\033[35m'  # Magenta
    }
    RESET = '\033[0m'

    def format(self, record):
        # colour a copy so other handlers see the plain level name
        record = logging.makeLogRecord(record.__dict__)
        log_color = self.COLORS.get(record.levelname, '')
        record.levelname = f"{log_color}{record.levelname}{self.RESET}"
        return super().format(record)


def configure_logging(level: str = "INFO", quiet: bool = False) -> None:
    """Install the coloured console handler on the root logger"""
    threshold = logging.WARNING if quiet else getattr(logging, level.upper(), logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    formatter = ColoredFormatter(LOG_FORMAT) if sys.stderr.isatty() else logging.Formatter(LOG_FORMAT)
    handler.setFormatter(formatter)
    handler.set_name("levy-im-console")

    root_logger = logging.getLogger()
    for old in list(root_logger.handlers):
        if old.get_name() == "levy-im-console":
            root_logger.removeHandler(old)
    root_logger.addHandler(handler)
    root_logger.setLevel(threshold)

    # Reduce plotting library verbosity (only show warnings and errors)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)
