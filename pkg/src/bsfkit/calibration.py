"""Host calibration and measured K-sweeps.

Latency and per-double transfer time are timed against an echo process on
loopback; the per-operation time comes from a compiled dependent
multiply-add chain. Sweeps run the Jacobi farm for a fixed number of
iterations and report speedup from per-iteration means.
"""

from __future__ import annotations

import logging
import os
import socket
import statistics
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Optional, Sequence

from . import _kernels
from .cost_model import MachineConstants, PredictionCurve, Variant, optimal_workers
from .jacobi import PLUGINS, LinearSystem, gen_paper_system
from .runtime import FarmConfig, measure_iteration, run_farm

log = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    pass


class ComparisonError(ValueError):
    pass


class LoopbackEcho:
    """Echo process on 127.0.0.1; use as a context manager."""

    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout
        self.proc: Optional[subprocess.Popen] = None
        self.sock: Optional[socket.socket] = None

    def __enter__(self) -> "LoopbackEcho":
        try:
            listener = socket.create_server(("127.0.0.1", 0))
        except OSError as exc:
            raise CalibrationError(f"cannot open loopback socket: {exc}") from exc
        with listener:
            port = listener.getsockname()[1]
            env = dict(os.environ)
            env["PYTHONPATH"] = os.pathsep.join(p for p in sys.path if p)
            self.proc = subprocess.Popen(
                [sys.executable, "-m", "bsfkit.runtime.worker", "--echo",
                 "--port", str(port), "--timeout", str(self.timeout)],
                env=env,
            )
            listener.settimeout(self.timeout)
            try:
                self.sock, _ = listener.accept()
            except OSError as exc:
                self.proc.kill()
                raise CalibrationError(f"echo process did not connect: {exc}") from exc
        self.sock.settimeout(self.timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return self

    def __exit__(self, *exc) -> None:
        if self.sock is not None:
            self.sock.close()
        if self.proc is not None:
            try:
                self.proc.wait(timeout=self.timeout)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def round_trip(self, payload: bytes) -> float:
        """Send ``payload`` and wait for all of it to come back; return seconds."""
        size = len(payload)
        received = 0
        view = memoryview(bytearray(min(size, 1 << 20)))
        errors: List[BaseException] = []

        def sender() -> None:
            try:
                self.sock.sendall(payload)
            except BaseException as exc:  # surfaced below
                errors.append(exc)

        t0 = time.perf_counter()
        if size <= 4096:
            self.sock.sendall(payload)
        else:
            thread = threading.Thread(target=sender)
            thread.start()
        while received < size:
            k = self.sock.recv_into(view, min(len(view), size - received))
            if k == 0:
                raise CalibrationError("echo process closed the connection")
            received += k
        elapsed = time.perf_counter() - t0
        if size > 4096:
            thread.join()
        if errors:
            raise CalibrationError(f"send failed: {errors[0]}")
        return elapsed


def measure_latency(rounds: int = 1000, echo: Optional[LoopbackEcho] = None) -> float:
    """Half the median round trip of a 1-byte message."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if echo is None:
        with LoopbackEcho() as e:
            return measure_latency(rounds, e)
    for _ in range(min(50, rounds)):
        echo.round_trip(b"x")
    times = [echo.round_trip(b"x") for _ in range(rounds)]
    return statistics.median(times) / 2


def measure_tau_op(count: int = 100_000_000) -> float:
    """Seconds per floating-point operation from a dependent multiply-add chain.

    Each step is one multiply and one add, so the chain performs 2*count ops.
    """
    _kernels.madd_chain(1000, 0.999999999, 1e-9, 1.0)
    t0 = time.perf_counter()
    result = _kernels.madd_chain(count, 0.999999999, 1e-9, 1.0)
    elapsed = time.perf_counter() - t0
    if result != result:
        raise CalibrationError("multiply-add chain produced NaN")
    log.debug("madd chain result %r", result)
    return elapsed / (2 * count)


def measure_tau_tr(
    count: int = 1_000_000,
    latency: Optional[float] = None,
    repeats: int = 3,
    echo: Optional[LoopbackEcho] = None,
) -> float:
    """Seconds per transferred double, latency removed.

    If subtracting the latency would leave a non-positive value the raw
    per-double time is returned instead and a warning is logged.
    """
    if echo is None:
        with LoopbackEcho() as e:
            return measure_tau_tr(count, latency, repeats, e)
    if latency is None:
        latency = measure_latency(echo=echo)
    payload = bytes(8 * count)
    echo.round_trip(payload)
    one_way = statistics.median(echo.round_trip(payload) for _ in range(repeats)) / 2
    value = (one_way - latency) / count
    if value <= 0:
        log.warning(
            "latency %.3g s exceeds one-way transfer time %.3g s; using unadjusted estimate",
            latency, one_way,
        )
        value = one_way / count
    return value


@dataclass
class Calibration:
    constants: MachineConstants
    metadata: Dict[str, object] = field(default_factory=dict)


def calibrate(
    latency_rounds: int = 1000,
    op_count: int = 100_000_000,
    tr_count: int = 1_000_000,
) -> Calibration:
    started = datetime.now(timezone.utc).isoformat()
    tau_op = measure_tau_op(op_count)
    with LoopbackEcho() as echo:
        L = measure_latency(latency_rounds, echo)
        tau_tr = measure_tau_tr(tr_count, latency=L, echo=echo)
    return Calibration(
        constants=MachineConstants(L=L, tau_op=tau_op, tau_tr=tau_tr),
        metadata={
            "started": started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "latency_rounds": latency_rounds,
            "op_count": op_count,
            "transfer_doubles": tr_count,
            "cpu_count": os.cpu_count(),
            "python": sys.version.split()[0],
        },
    )


@dataclass(frozen=True)
class ObservationRecord:
    n: int
    variant: Variant
    K: int
    mean_iter_time: float
    speedup_obs: float
    efficiency_obs: float


def observation_records(
    variant, n: int, times: Dict[int, float]
) -> List[ObservationRecord]:
    """Turn per-K mean iteration times into records; needs the K=1 time."""
    variant = Variant.parse(variant)
    if 1 not in times:
        raise ValueError("observations need a K=1 baseline")
    base = times[1]
    out = []
    for K in sorted(times):
        a = 1.0 if K == 1 else base / times[K]
        out.append(ObservationRecord(n, variant, K, times[K], a, a / K))
    return out


def _plugin_for(variant: Variant, iters: int):
    name = "jacobi-m" if variant is Variant.M else "jacobi-mr"
    return PLUGINS[name](max_iters=iters, fixed_iterations=True, check_divergence=False)


def time_cell(
    variant, system: LinearSystem, K: int, iters: int, backend: str = "in-process"
) -> float:
    """Mean wall time of one iteration, the first (warm-up) one excluded."""
    plugin = _plugin_for(Variant.parse(variant), iters)
    _, traces = run_farm(plugin, FarmConfig(workers=K, backend=backend), system)
    return measure_iteration(traces).total


def sweep(
    variant,
    n: int,
    K_list: Iterable[int],
    iters: int = 50,
    backend: str = "in-process",
    repeats: int = 3,
    system: Optional[LinearSystem] = None,
) -> List[ObservationRecord]:
    """Measured speedup for each K on the scalable test system from gen_paper_system.

    Each (n, K) cell is run ``repeats`` times and the median kept. A K=1 run
    is always made for the baseline, even if K=1 is not requested.
    """
    variant = Variant.parse(variant)
    ks = sorted(set(int(k) for k in K_list))
    if not ks or ks[0] < 1:
        raise ValueError("K_list must contain positive worker counts")
    if iters < 2:
        raise ValueError("iters must be >= 2 so one iteration remains after warm-up")
    if system is None:
        system = gen_paper_system(n)
    cells = ks if ks[0] == 1 else [1] + ks
    times = {}
    for K in cells:
        runs = [time_cell(variant, system, K, iters, backend) for _ in range(repeats)]
        times[K] = statistics.median(runs)
        log.info("%s n=%d K=%d: %.6g s/iter", variant.value, n, K, times[K])
    return [r for r in observation_records(variant, n, times) if r.K in ks]


@dataclass(frozen=True)
class ComparisonRow:
    K: int
    speedup_pred: float
    speedup_obs: float
    efficiency_pred: float
    efficiency_obs: float
    deviation: float


@dataclass
class ComparisonReport:
    variant: Variant
    n: int
    rows: List[ComparisonRow]
    predicted_optimum: int
    observed_optimum: int
    scalability_bound: float

    @property
    def max_deviation(self) -> float:
        return max(r.deviation for r in self.rows)

    @property
    def predicted_optimum_in_range(self) -> int:
        best = self.rows[0]
        for r in self.rows[1:]:
            if r.speedup_pred > best.speedup_pred:
                best = r
        return best.K

    @property
    def argmax_agrees(self) -> bool:
        return self.predicted_optimum_in_range == self.observed_optimum


def compare(pred: PredictionCurve, obs: Sequence[ObservationRecord]) -> ComparisonReport:
    if not obs:
        raise ComparisonError("no observations to compare")
    seen = set()
    rows = []
    for rec in obs:
        if rec.variant is not pred.variant or rec.n != pred.n:
            raise ComparisonError(
                f"observation ({rec.variant.value}, n={rec.n}) does not match "
                f"prediction ({pred.variant.value}, n={pred.n})"
            )
        if rec.K in seen:
            raise ComparisonError(f"duplicate observation for K={rec.K}")
        seen.add(rec.K)
        try:
            a_pred = pred.speedup_at(rec.K)
        except KeyError:
            raise ComparisonError(f"prediction has no row for K={rec.K}") from None
        rows.append(
            ComparisonRow(
                K=rec.K,
                speedup_pred=a_pred,
                speedup_obs=rec.speedup_obs,
                efficiency_pred=a_pred / rec.K,
                efficiency_obs=rec.efficiency_obs,
                deviation=abs(a_pred - rec.speedup_obs) / rec.speedup_obs,
            )
        )
    rows.sort(key=lambda r: r.K)
    observed = rows[0]
    for r in rows[1:]:
        if r.speedup_obs > observed.speedup_obs:
            observed = r
    return ComparisonReport(
        variant=pred.variant,
        n=pred.n,
        rows=rows,
        predicted_optimum=optimal_workers(pred),
        observed_optimum=observed.K,
        scalability_bound=pred.scalability_bound,
    )
