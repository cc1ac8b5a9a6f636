"""Master/worker farm runtime with sequential, in-process and multi-process backends."""

from .farm import run_farm
from .plugin import (
    BACKENDS,
    FarmConfig,
    FarmError,
    FarmPlugin,
    FarmTimeout,
    IterationTrace,
    TraceSummary,
    WorkerError,
    measure_iteration,
)

__all__ = [
    "BACKENDS",
    "FarmConfig",
    "FarmError",
    "FarmPlugin",
    "FarmTimeout",
    "IterationTrace",
    "TraceSummary",
    "WorkerError",
    "measure_iteration",
    "run_farm",
]
