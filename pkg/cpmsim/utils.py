"""Utility functions for common operations"""

import functools
import logging
from typing import Any, Callable

from .clock import InvariantViolation
from .config import ConfigError, SimulationError
from .mobility import TraceFormatError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SIMULATION_ERROR = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3


def handle_cli_errors(func: Callable[..., int]) -> Callable[..., int]:
    """Decorator mapping simulator errors to process exit statuses"""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> int:
        try:
            return func(*args, **kwargs)
        except TraceFormatError as e:
            logger.error(f"Trace error: {e}")
            return EXIT_CONFIG_ERROR
        except ConfigError as e:
            logger.error(f"Configuration error: {e}")
            return EXIT_CONFIG_ERROR
        except InvariantViolation as e:
            logger.error(f"Simulation aborted: {e.dump()}")
            return EXIT_SIMULATION_ERROR
        except SimulationError as e:
            logger.error(f"Simulation error in {func.__name__}: {e}")
            return EXIT_SIMULATION_ERROR
        except OSError as e:
            logger.error(f"I/O error: {e}")
            return EXIT_IO_ERROR
        except Exception as e:
            logger.exception(f"Unexpected error in {func.__name__}: {e}")
            return EXIT_SIMULATION_ERROR

    return wrapper
