"""Logging configuration for the simulator"""

import logging
import os
import sys
from typing import List, Optional

CONSOLE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
# Sweep workers write to the same file; the process name tells cells apart
FILE_FORMAT = "%(asctime)s - %(processName)s - %(name)s - %(levelname)s - %(message)s"

QUIET_LOGGERS = ("numexpr", "shapely")


class LogConfig:
    """Centralised logging configuration"""

    @staticmethod
    def resolve_level(level: Optional[str] = None) -> int:
        """Numeric level for a name such as "debug"; LOG_LEVEL when omitted, INFO when unknown"""
        name = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
        resolved = logging.getLevelName(name)
        return resolved if isinstance(resolved, int) else logging.INFO

    @staticmethod
    def setup_logging(
        level: Optional[str] = None,
        log_file: Optional[str] = None,
        force: bool = False,
    ) -> None:
        """
        Setup simulator logging

        Console output goes to stderr so that stdout only carries what the
        CLI prints (schedules, summaries, comparison tables).

        Args:
            level: Log level name; LOG_LEVEL when omitted
            log_file: Also append records to this file (CPMSIM_LOG_FILE)
            force: Replace an existing configuration (the CLI's --log-level)
        """
        root_logger = logging.getLogger()
        if root_logger.hasHandlers() and not force:
            return

        console = logging.StreamHandler(sys.stderr)
        console.setFormatter(logging.Formatter(CONSOLE_FORMAT))
        handlers: List[logging.Handler] = [console]

        if log_file:
            try:
                file_handler = logging.FileHandler(log_file, encoding="utf-8")
                file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
                handlers.append(file_handler)
            except OSError as e:
                print(f"Warning: Could not open log file {log_file}: {e}", file=sys.stderr)

        numeric = LogConfig.resolve_level(level)
        logging.basicConfig(level=numeric, handlers=handlers, force=True)

        for name in QUIET_LOGGERS:
            logging.getLogger(name).setLevel(logging.WARNING)

        logging.getLogger(__name__).debug(
            f"Logging configured at {logging.getLevelName(numeric)}"
            + (f", file {log_file}" if log_file else "")
        )
