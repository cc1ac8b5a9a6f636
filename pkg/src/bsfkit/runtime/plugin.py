from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, List, Sequence, Tuple

import numpy as np

from . import wire

BACKENDS = ("sequential", "in-process", "multi-process")


class FarmError(RuntimeError):
    pass


class WorkerError(FarmError):
    def __init__(self, worker: int, message: str):
        super().__init__(f"worker {worker}: {message}")
        self.worker = worker


class FarmTimeout(FarmError):
    pass


class FarmPlugin(ABC):
    """User code run by the farm.

    ``init`` is called once on the master and on every worker with the same
    input. Each iteration the master builds one order, every worker turns it
    into a partial result for its slice of ``range(list_length())``, and the
    master folds the K partials (in worker order) into its next state.

    ``process_order`` must depend only on the order, the range and the data
    given to ``init``. Plugins used with the multi-process backend must be
    importable and constructible without arguments, since each worker process
    builds its own instance.

    Orders and partials travel as float vectors by default; override the
    ``encode_*``/``decode_*`` pairs for other payloads.
    """

    @abstractmethod
    def init(self, data: Any) -> None: ...

    @abstractmethod
    def list_length(self) -> int: ...

    @abstractmethod
    def initial_state(self) -> Any: ...

    @abstractmethod
    def make_order(self, state: Any) -> Any: ...

    @abstractmethod
    def process_order(self, order: Any, part: range) -> Any: ...

    @abstractmethod
    def evaluate(self, partials: Sequence[Any], state: Any) -> Tuple[Any, bool]: ...

    def encode_input(self, data: Any) -> bytes:
        return wire.pack_vector(data)

    def decode_input(self, payload) -> Any:
        return wire.unpack_vector(payload)[0]

    def encode_order(self, order: Any) -> bytes:
        return wire.pack_vector(order)

    def decode_order(self, payload) -> Any:
        return wire.unpack_vector(payload)[0]

    def encode_partial(self, partial: Any) -> bytes:
        return wire.pack_vector(partial)

    def decode_partial(self, payload) -> Any:
        return wire.unpack_vector(payload)[0]


@dataclass
class FarmConfig:
    workers: int = 1
    backend: str = "sequential"
    host: str = "127.0.0.1"
    port: int = 0
    timeout: float = 30.0
    # False: wait for externally started workers instead of spawning them
    spawn_workers: bool = True
    _busy: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self) -> None:
        if isinstance(self.workers, bool) or int(self.workers) != self.workers or self.workers < 1:
            raise ValueError(f"a farm needs at least one worker, got {self.workers!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; choose from {', '.join(BACKENDS)}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class IterationTrace:
    """Wall-clock seconds spent in each macro-step of one iteration.

    t_send covers building and dispatching the order, t_work runs until the
    first partial is available, t_receive until the last one is in, and
    t_process is the master's evaluation and stop check.
    """

    iteration: int
    t_send: float
    t_work: float
    t_receive: float
    t_process: float

    @property
    def total(self) -> float:
        return self.t_send + self.t_work + self.t_receive + self.t_process


@dataclass(frozen=True)
class TraceSummary:
    t_send: float
    t_work: float
    t_receive: float
    t_process: float
    samples: int

    @property
    def total(self) -> float:
        return self.t_send + self.t_work + self.t_receive + self.t_process


def measure_iteration(traces: Sequence[IterationTrace]) -> TraceSummary:
    """Mean macro-step times, leaving out the first (warm-up) iteration.

    A single trace is returned as is, since there is nothing else to average.
    """
    if not traces:
        raise ValueError("measure_iteration needs at least one trace")
    used: List[IterationTrace] = list(traces[1:]) or list(traces)
    cols = np.array([[t.t_send, t.t_work, t.t_receive, t.t_process] for t in used])
    means = cols.mean(axis=0)
    return TraceSummary(*(float(v) for v in means), samples=len(used))
