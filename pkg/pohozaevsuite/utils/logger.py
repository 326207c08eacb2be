import logging
import sys
from pathlib import Path
from datetime import datetime
from typing import Optional, Iterator
from contextlib import contextmanager

CONSOLE_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
FILE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# scipy quadrature and ODE warnings are routed through this logger
WARNINGS_LOGGER = "py.warnings"


class LoggerSetup:
    """Console and optional DEBUG-file logging for solver runs.

    The console receives INFO and above on stdout. With a log directory every
    run also gets a timestamped file at DEBUG level, which is where iteration
    traces, seed outcomes and numerical warnings end up.
    """

    def __init__(self, log_dir: Optional[Path] = None):
        self.log_dir = Path(log_dir) if log_dir else None
        if self.log_dir:
            self.log_dir.mkdir(parents=True, exist_ok=True)

    def _file_handler(self, name: str) -> logging.FileHandler:
        stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        handler = logging.FileHandler(self.log_dir / f"{name}_{stamp}.log")
        handler.setLevel(logging.DEBUG)
        handler.setFormatter(logging.Formatter(FILE_FORMAT))
        return handler

    def setup_logger(self, name: str = "PohozaevSuite") -> logging.Logger:
        """Configure ``name`` from scratch and return it.

        Calling this twice for the same name replaces the handlers instead of
        stacking them.
        """
        logger = logging.getLogger(name)
        logger.setLevel(logging.DEBUG)
        logger.propagate = False
        for handler in list(logger.handlers):
            handler.close()
        logger.handlers.clear()

        console = logging.StreamHandler(sys.stdout)
        console.setLevel(logging.INFO)
        console.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(console)

        if self.log_dir:
            logger.addHandler(self._file_handler(name))

        return logger

    @staticmethod
    def get_logger(name: str = "PohozaevSuite") -> logging.Logger:
        """Return ``name``, configuring a console-only logger on first use."""
        logger = logging.getLogger(name)
        if not logger.handlers:
            LoggerSetup().setup_logger(name)
        return logger

    @staticmethod
    def set_console_level(logger: logging.Logger, level: int) -> None:
        """Change the level of console handlers only; file handlers keep DEBUG."""
        for handler in logger.handlers:
            if isinstance(handler, logging.StreamHandler) and not isinstance(handler, logging.FileHandler):
                handler.setLevel(level)

    @staticmethod
    def close_file_handlers(logger: logging.Logger) -> None:
        """Close and detach the file handlers of ``logger``; the console stays."""
        for handler in [h for h in logger.handlers if isinstance(h, logging.FileHandler)]:
            handler.close()
            logger.removeHandler(handler)


@contextmanager
def captured_warnings(logger: logging.Logger) -> Iterator[None]:
    """Route Python warnings into the file handlers of ``logger`` while the block runs.

    The handlers are detached from the process-wide warnings logger on exit, so
    a later run never writes into a log file that has since been removed.
    """
    handlers = [h for h in logger.handlers if isinstance(h, logging.FileHandler)]
    if not handlers:
        yield
        return
    warnings_logger = logging.getLogger(WARNINGS_LOGGER)
    logging.captureWarnings(True)
    for handler in handlers:
        warnings_logger.addHandler(handler)
    try:
        yield
    finally:
        for handler in handlers:
            warnings_logger.removeHandler(handler)
        logging.captureWarnings(False)
