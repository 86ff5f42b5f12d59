"""
Logging configuration

Modules log through children of the ``branched_flow`` logger
(``get_logger("quantum")`` -> ``branched_flow.quantum``).
"""

import logging
import sys
from typing import Optional

from colorama import Fore, Style

LOGGER_NAME = "branched_flow"

LEVEL_COLORS = {
    logging.DEBUG: Style.DIM,
    logging.INFO: "",
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Fore.RED + Style.BRIGHT,
}


class ConsoleFormatter(logging.Formatter):
    """Level-coloured console lines with the component suffix of the logger name"""

    def __init__(self, color: bool = True):
        super().__init__("%(asctime)s - %(component)s - %(levelname)s - %(message)s", "%H:%M:%S")
        self.color = color

    def format(self, record: logging.LogRecord) -> str:
        record.component = record.name.split(".", 1)[-1] if "." in record.name else record.name
        line = super().format(record)
        color = LEVEL_COLORS.get(record.levelno, "") if self.color else ""
        return f"{color}{line}{Style.RESET_ALL}" if color else line


def setup_logger(
    verbose: bool = False, log_file: Optional[str] = None
) -> logging.Logger:
    """Console handler at INFO (DEBUG when verbose), plus an optional DEBUG file log"""

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    console_handler.setFormatter(ConsoleFormatter(color=sys.stderr.isatty()))
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )
        logger.addHandler(file_handler)

    return logger


def get_logger(component: Optional[str] = None) -> logging.Logger:
    """Get the application logger, or one of its per-module children"""
    if component:
        return logging.getLogger(f"{LOGGER_NAME}.{component}")
    return logging.getLogger(LOGGER_NAME)
