"""
Logging for the estimation simulator: one `consensus_estimation` logger tree,
configured once, with console output and rotating run and error logs
"""
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from ..config import settings

ROOT_NAME = "consensus_estimation"
LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(funcName)s:%(lineno)d | %(message)s"
MAX_LOG_BYTES = 10 * 1024 * 1024


class ConsensusEstimationLogger:
    """Configures the simulator's logger tree on first construction"""

    _instance: Optional["ConsensusEstimationLogger"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._configure()
        return cls._instance

    def _configure(self):
        log_dir = Path(settings.log_dir)
        if not log_dir.is_absolute():
            log_dir = Path(__file__).resolve().parents[2] / log_dir
        log_dir.mkdir(parents=True, exist_ok=True)

        level = logging.getLevelName(settings.log_level.upper())
        if not isinstance(level, int):
            level = logging.INFO
        formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")

        # Only simulator records; numpy/scipy loggers are left alone
        self.root = logging.getLogger(ROOT_NAME)
        self.root.setLevel(level)
        self.root.propagate = False
        for handler in self.root.handlers[:]:
            self.root.removeHandler(handler)

        handlers = [
            (logging.StreamHandler(sys.stdout), level),
            (RotatingFileHandler(log_dir / f"{ROOT_NAME}.log", maxBytes=MAX_LOG_BYTES, backupCount=5), level),
            (RotatingFileHandler(log_dir / "errors.log", maxBytes=MAX_LOG_BYTES, backupCount=5), logging.ERROR),
        ]
        for handler, handler_level in handlers:
            handler.setLevel(handler_level)
            handler.setFormatter(formatter)
            self.root.addHandler(handler)

    def component(self, name: str) -> logging.Logger:
        return logging.getLogger(f"{ROOT_NAME}.{name}")


def get_logger(component: str) -> logging.Logger:
    """Logger for one simulator component, e.g. get_logger("harness")"""
    return ConsensusEstimationLogger().component(component)
