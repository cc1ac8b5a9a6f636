"""The master loop and its three execution backends."""

from __future__ import annotations

import logging
import os
import selectors
import socket
import subprocess
import sys
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from ..list_ops import SublistPartition, partition
from . import wire
from .plugin import (
    FarmConfig,
    FarmError,
    FarmPlugin,
    FarmTimeout,
    IterationTrace,
    WorkerError,
)

log = logging.getLogger(__name__)

_clock = time.perf_counter


def _freeze(order: Any) -> Any:
    # in-process workers share one read-only copy of the order
    if isinstance(order, np.ndarray):
        frozen = order.copy()
        frozen.setflags(write=False)
        return frozen
    return order


class _Backend:
    def start(self, plugin: FarmPlugin, data: Any, parts: SublistPartition) -> None:
        raise NotImplementedError

    def dispatch(self, iteration: int, order: Any) -> Tuple[List[Any], float, float]:
        """Run one iteration; return partials plus (t_work, t_receive)."""
        raise NotImplementedError

    def close(self) -> None:
        pass


class SequentialBackend(_Backend):
    """Runs the K workers one by one in worker order; the oracle backend."""

    def start(self, plugin, data, parts):
        self.plugin = plugin
        self.parts = parts

    def dispatch(self, iteration, order):
        t0 = _clock()
        partials = []
        for j, part in enumerate(self.parts.ranges()):
            try:
                partials.append(self.plugin.process_order(order, part))
            except Exception as exc:
                raise WorkerError(j, f"process_order failed: {exc!r}") from exc
        return partials, _clock() - t0, 0.0


class InProcessBackend(_Backend):
    """K worker threads sharing the master's read-only init data."""

    def start(self, plugin, data, parts):
        self.plugin = plugin
        self.parts = parts
        self.pool = ThreadPoolExecutor(max_workers=parts.parts, thread_name_prefix="bsf-worker")

    def _work(self, j: int, order: Any, part: range) -> Any:
        return self.plugin.process_order(order, part)

    def dispatch(self, iteration, order):
        t0 = _clock()
        futures = [
            self.pool.submit(self._work, j, order, part)
            for j, part in enumerate(self.parts.ranges())
        ]
        index = {fut: j for j, fut in enumerate(futures)}
        done, pending = wait(futures, return_when=FIRST_COMPLETED)
        t_first = _clock()
        self._raise_failures(done, index, pending)
        while pending:
            more, pending = wait(pending, return_when=FIRST_COMPLETED)
            self._raise_failures(more, index, pending)
        t_all = _clock()
        return [fut.result() for fut in futures], t_first - t0, t_all - t_first

    @staticmethod
    def _raise_failures(done, index, pending):
        for fut in sorted(done, key=index.__getitem__):
            exc = fut.exception()
            if exc is not None:
                for other in pending:
                    other.cancel()
                raise WorkerError(index[fut], f"process_order failed: {exc!r}") from exc

    def close(self):
        self.pool.shutdown(wait=True, cancel_futures=True)


def plugin_path(plugin: FarmPlugin) -> str:
    cls = type(plugin)
    return f"{cls.__module__}:{cls.__qualname__}"


class MultiProcessBackend(_Backend):
    """Worker processes talking to the master over loopback/TCP sockets."""

    def __init__(self, cfg: FarmConfig):
        self.cfg = cfg
        self.procs: List[subprocess.Popen] = []
        self.socks: List[Optional[socket.socket]] = []
        self.listener: Optional[socket.socket] = None

    @property
    def address(self) -> Tuple[str, int]:
        return self.listener.getsockname()[:2]

    def start(self, plugin, data, parts):
        self.plugin = plugin
        K = parts.parts
        self.listener = socket.create_server((self.cfg.host, self.cfg.port), backlog=K)
        host, port = self.address
        if self.cfg.spawn_workers:
            env = dict(os.environ)
            env["PYTHONPATH"] = os.pathsep.join(p for p in sys.path if p)
            for j in range(K):
                cmd = [
                    sys.executable, "-m", "bsfkit.runtime.worker",
                    "--host", host, "--port", str(port),
                    "--index", str(j), "--workers", str(K),
                    "--plugin", plugin_path(plugin),
                    "--timeout", str(self.cfg.timeout),
                ]
                self.procs.append(subprocess.Popen(cmd, env=env))
        else:
            log.info("waiting for %d workers on %s:%d", K, host, port)
        self.socks = [None] * K
        self._accept_all(K)
        payload = wire.encode_frame(wire.INIT, plugin.encode_input(data))
        for sock in self.socks:
            sock.sendall(payload)
        self.decoders = [wire.FrameDecoder() for _ in range(K)]

    def _accept_all(self, K: int) -> None:
        deadline = _clock() + self.cfg.timeout
        self.listener.settimeout(0.1)
        accepted = 0
        while accepted < K:
            if _clock() > deadline:
                raise FarmTimeout(f"only {accepted} of {K} workers connected within {self.cfg.timeout}s")
            for j, proc in enumerate(self.procs):
                code = proc.poll()
                if code is not None and self.socks[j] is None:
                    raise WorkerError(j, f"exited with status {code} before connecting")
            try:
                conn, _ = self.listener.accept()
            except socket.timeout:
                continue
            conn.settimeout(self.cfg.timeout)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            index = wire.decode_handshake(wire.recv_exactly(conn, 4))
            if index >= K or self.socks[index] is not None:
                conn.close()
                raise FarmError(f"bad or duplicate worker index {index} in handshake")
            self.socks[index] = conn
            accepted += 1

    def dispatch(self, iteration, order):
        K = len(self.socks)
        frame = wire.encode_frame(
            wire.ORDER, wire.order_payload(iteration, self.plugin.encode_order(order))
        )
        t0 = _clock()
        for j, sock in enumerate(self.socks):
            try:
                sock.sendall(frame)
            except OSError as exc:
                raise WorkerError(j, f"sending order failed: {exc}") from exc
        self.last_send = _clock() - t0

        t_start = _clock()
        partials: List[Any] = [None] * K
        missing = set(range(K))
        t_first = None
        sel = selectors.DefaultSelector()
        for j, sock in enumerate(self.socks):
            sel.register(sock, selectors.EVENT_READ, j)
        try:
            deadline = _clock() + self.cfg.timeout
            while missing:
                remaining = deadline - _clock()
                if remaining <= 0:
                    raise FarmTimeout(
                        f"iteration {iteration}: no partial from workers {sorted(missing)} "
                        f"within {self.cfg.timeout}s"
                    )
                for key, _ in sel.select(timeout=remaining):
                    j = key.data
                    try:
                        chunk = key.fileobj.recv(1 << 20)
                    except OSError as exc:
                        raise WorkerError(j, f"receive failed: {exc}") from exc
                    if not chunk:
                        raise WorkerError(j, "connection closed")
                    for tag, payload in self.decoders[j].feed(chunk):
                        if tag != wire.PARTIAL:
                            raise wire.ProtocolError(f"worker {j} sent {wire.TAG_NAMES[tag]}")
                        it, worker, body = wire.parse_partial(payload)
                        if it != iteration or worker != j:
                            raise wire.ProtocolError(
                                f"worker {j} sent partial for iteration {it}, worker {worker}"
                            )
                        partials[worker] = self.plugin.decode_partial(body)
                        missing.discard(worker)
                        if t_first is None:
                            t_first = _clock()
        finally:
            sel.close()
        t_all = _clock()
        return partials, t_first - t_start, t_all - t_first

    def close(self):
        for sock in self.socks:
            if sock is None:
                continue
            try:
                sock.sendall(wire.encode_frame(wire.STOP))
            except OSError:
                pass
            sock.close()
        if self.listener is not None:
            self.listener.close()
        for proc in self.procs:
            try:
                proc.wait(timeout=self.cfg.timeout)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()


def make_backend(cfg: FarmConfig) -> _Backend:
    if cfg.backend == "sequential":
        return SequentialBackend()
    if cfg.backend == "in-process":
        return InProcessBackend()
    return MultiProcessBackend(cfg)


def run_farm(
    plugin: FarmPlugin, cfg: FarmConfig, data: Any
) -> Tuple[Any, List[IterationTrace]]:
    """Initialise, iterate until the plugin says stop, finalise.

    Returns the master's final state and one trace per completed iteration.
    """
    if not cfg._busy.acquire(blocking=False):
        raise FarmError("this FarmConfig is already running a farm")
    try:
        plugin.init(data)
        parts = partition(plugin.list_length(), cfg.workers)
        backend = make_backend(cfg)
        traces: List[IterationTrace] = []
        try:
            backend.start(plugin, data, parts)
            state = plugin.initial_state()
            iteration = 0
            while True:
                t0 = _clock()
                order = _freeze(plugin.make_order(state))
                t_build = _clock() - t0
                partials, t_work, t_receive = backend.dispatch(iteration, order)
                t_send = t_build + getattr(backend, "last_send", 0.0)
                t1 = _clock()
                state, stop = plugin.evaluate(partials, state)
                t_process = _clock() - t1
                traces.append(IterationTrace(iteration, t_send, t_work, t_receive, t_process))
                iteration += 1
                if stop:
                    break
        finally:
            backend.close()
        return state, traces
    finally:
        cfg._busy.release()
