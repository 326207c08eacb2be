from typing import Optional, Callable
import logging
import os

from pohozaevsuite.utils.errors import ProcessingError, handle_processing_errors
from pohozaevsuite.utils.logger import LoggerSetup
from pohozaevsuite.utils.config import SolverConfig, ConfigManager

# Below this many intervals the Euler-Lagrange residual is dominated by O(h) error
MIN_GRID_INTERVALS = 64


class BaseProcessor:
    """Common plumbing of the solvers: configuration, logging and progress.

    Subclasses implement ``process`` and report progress through
    ``update_status``, which forwards to the optional callback used by the
    sweep manager.
    """

    def __init__(self,
                 config: Optional[SolverConfig] = None,
                 logger: Optional[logging.Logger] = None,
                 callback: Optional[Callable[[str, float], None]] = None):
        """
        Args:
            config: Solver options; None reads them through ConfigManager
            logger: Logger to use; None gives the shared console logger
            callback: Receives (message, percent) on every status update
        """
        self.config = config if config is not None else ConfigManager().get_solver_config()
        self.logger = logger or LoggerSetup.get_logger("PohozaevSuite")
        self.callback = callback

        if not self.validate_config():
            raise ProcessingError("Invalid processor configuration")

    def validate_config(self) -> bool:
        """Check the options the solvers rely on and prepare the output directory."""
        try:
            workers = self.config.max_workers
            if not isinstance(workers, int) or workers < 1:
                self.logger.error(f"Invalid max_workers value: {workers}")
                return False
            available = os.cpu_count() or 1
            if workers > available:
                self.logger.debug(f"max_workers={workers} exceeds the {available} available cores")

            grid_n = getattr(self.config, 'grid_n', None)
            if grid_n is not None and int(grid_n) < MIN_GRID_INTERVALS:
                self.logger.error(f"grid_n={grid_n} is below {MIN_GRID_INTERVALS} intervals")
                return False

            grid_R = getattr(self.config, 'grid_R', None)
            if grid_R is not None and not grid_R > 0:
                self.logger.error(f"Invalid truncation radius: {grid_R}")
                return False

            if getattr(self.config, 'max_iterations', 1) < 1:
                self.logger.error("max_iterations must be at least 1")
                return False

            if self.config.output_dir is not None:
                self.config.output_dir.mkdir(parents=True, exist_ok=True)
            return True

        except Exception as e:
            self.logger.error(f"Configuration validation error: {e}")
            return False

    def update_status(self, message: str, progress: float):
        """Log ``message`` with ``progress`` clamped to [0, 100] and notify the callback."""
        progress = max(0, min(100, progress))
        self.logger.info(f"{message} - {progress:.1f}%")
        if self.callback:
            try:
                self.callback(message, progress)
            except Exception as e:
                self.logger.warning(f"Error in callback: {e}")

    @handle_processing_errors
    def process(self, *args, **kwargs):
        raise NotImplementedError("Subclasses must implement process method")

    def cleanup(self):
        """Flush the handlers of the processor logger at the end of a ``with`` block."""
        for handler in self.logger.handlers:
            handler.flush()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.cleanup()
