"""Plain-text file formats.

Floats are written with ``repr``, Python's shortest round-trip form, so
every write/read pair reproduces the doubles exactly. Writes go to a
temporary file in the target directory and are renamed into place.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .calibration import Calibration, ComparisonReport, ObservationRecord
from .cost_model import MachineConstants, PredictionCurve, Variant
from .jacobi import LinearSystem, SolveResult

CURVE_HEADER = "K,speedup,efficiency"
OBSERVATION_HEADER = "K,mean_iter_time,speedup,efficiency"
COMPARISON_HEADER = "K,speedup_pred,speedup_obs,efficiency_pred,efficiency_obs,deviation"


class FormatError(ValueError):
    pass


def fmt(value: float) -> str:
    return repr(float(value))


def atomic_write(path, text: str) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _content_lines(text: str) -> List[str]:
    out = []
    for raw in text.splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


def _metadata(text: str) -> Dict[str, str]:
    meta = {}
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("#") and ":" in line:
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
    return meta


# -- matrix files -------------------------------------------------------------

def dumps_matrix(system: LinearSystem) -> str:
    A = np.asarray(system.A, dtype=np.float64)
    lines = [str(system.n)]
    lines.extend(" ".join(map(repr, row)) for row in A.tolist())
    lines.append(" ".join(map(repr, np.asarray(system.b, dtype=np.float64).tolist())))
    return "\n".join(lines) + "\n"


def loads_matrix(text: str) -> LinearSystem:
    lines = _content_lines(text)
    if not lines:
        raise FormatError("empty matrix file")
    try:
        n = int(lines[0])
    except ValueError:
        raise FormatError(f"first line must be the dimension, got {lines[0]!r}") from None
    if n < 1:
        raise FormatError(f"dimension must be >= 1, got {n}")
    if len(lines) != n + 2:
        raise FormatError(f"expected {n + 2} non-comment lines for n={n}, found {len(lines)}")
    rows = []
    for k, line in enumerate(lines[1:], start=1):
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError as exc:
            raise FormatError(f"line {k + 1}: {exc}") from None
        if len(values) != n:
            raise FormatError(f"line {k + 1}: expected {n} values, found {len(values)}")
        rows.append(values)
    return LinearSystem(A=np.array(rows[:n]), b=np.array(rows[n]))


def write_matrix(path, system: LinearSystem) -> None:
    atomic_write(path, dumps_matrix(system))


def read_matrix(path) -> LinearSystem:
    return loads_matrix(Path(path).read_text(encoding="utf-8"))


# -- prediction curves --------------------------------------------------------

def dumps_curve(curve: PredictionCurve, constants: Optional[MachineConstants] = None) -> str:
    lines = [f"# variant: {curve.variant.value}", f"# n: {curve.n}"]
    lines.append(f"# scalability_bound: {fmt(curve.scalability_bound)}")
    if constants is not None:
        lines += [
            f"# L: {fmt(constants.L)}",
            f"# tau_op: {fmt(constants.tau_op)}",
            f"# tau_tr: {fmt(constants.tau_tr)}",
        ]
    lines.append(CURVE_HEADER)
    lines.extend(f"{K},{fmt(a)},{fmt(e)}" for K, a, e in curve.rows)
    return "\n".join(lines) + "\n"


def loads_curve(text: str) -> PredictionCurve:
    meta = _metadata(text)
    try:
        variant = Variant.parse(meta["variant"])
        n = int(meta["n"])
    except KeyError as exc:
        raise FormatError(f"curve file lacks '# {exc.args[0]}:' metadata") from None
    lines = _content_lines(text)
    if not lines or lines[0] != CURVE_HEADER:
        raise FormatError(f"curve file must start with header {CURVE_HEADER!r}")
    rows = []
    for line in lines[1:]:
        k, a, e = line.split(",")
        rows.append((int(k), float(a), float(e)))
    bound = float(meta.get("scalability_bound", "nan"))
    return PredictionCurve(variant=variant, n=n, rows=rows, scalability_bound=bound)


def write_curve(path, curve: PredictionCurve, constants: Optional[MachineConstants] = None) -> None:
    atomic_write(path, dumps_curve(curve, constants))


def read_curve(path) -> PredictionCurve:
    return loads_curve(Path(path).read_text(encoding="utf-8"))


# -- calibration --------------------------------------------------------------

def dumps_calibration(cal: Calibration) -> str:
    c = cal.constants
    doc = {"L": c.L, "tau_op": c.tau_op, "tau_tr": c.tau_tr, "metadata": cal.metadata}
    return json.dumps(doc, indent=2) + "\n"


def loads_calibration(text: str) -> Calibration:
    try:
        doc = json.loads(text)
        constants = MachineConstants(L=doc["L"], tau_op=doc["tau_op"], tau_tr=doc["tau_tr"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"bad calibration file: {exc}") from None
    return Calibration(constants=constants, metadata=doc.get("metadata", {}))


def write_calibration(path, cal: Calibration) -> None:
    atomic_write(path, dumps_calibration(cal))


def read_calibration(path) -> Calibration:
    return loads_calibration(Path(path).read_text(encoding="utf-8"))


# -- observations and comparisons ---------------------------------------------

def dumps_observations(records: Sequence[ObservationRecord]) -> str:
    if not records:
        raise FormatError("no observations to write")
    first = records[0]
    lines = [f"# variant: {first.variant.value}", f"# n: {first.n}", OBSERVATION_HEADER]
    for r in records:
        if r.variant is not first.variant or r.n != first.n:
            raise FormatError("observation file holds a single (variant, n)")
        lines.append(f"{r.K},{fmt(r.mean_iter_time)},{fmt(r.speedup_obs)},{fmt(r.efficiency_obs)}")
    return "\n".join(lines) + "\n"


def loads_observations(text: str) -> List[ObservationRecord]:
    meta = _metadata(text)
    try:
        variant = Variant.parse(meta["variant"])
        n = int(meta["n"])
    except KeyError as exc:
        raise FormatError(f"observation file lacks '# {exc.args[0]}:' metadata") from None
    lines = _content_lines(text)
    if not lines or lines[0] != OBSERVATION_HEADER:
        raise FormatError(f"observation file must start with header {OBSERVATION_HEADER!r}")
    out = []
    for line in lines[1:]:
        k, t, a, e = line.split(",")
        out.append(ObservationRecord(n, variant, int(k), float(t), float(a), float(e)))
    return out


def write_observations(path, records: Sequence[ObservationRecord]) -> None:
    atomic_write(path, dumps_observations(records))


def read_observations(path) -> List[ObservationRecord]:
    return loads_observations(Path(path).read_text(encoding="utf-8"))


def dumps_comparison(report: ComparisonReport) -> str:
    lines = [
        f"# variant: {report.variant.value}",
        f"# n: {report.n}",
        f"# max_deviation: {fmt(report.max_deviation)}",
        f"# scalability_bound: {fmt(report.scalability_bound)}",
        f"# predicted_optimum: {report.predicted_optimum}",
        f"# predicted_optimum_in_range: {report.predicted_optimum_in_range}",
        f"# observed_optimum: {report.observed_optimum}",
        COMPARISON_HEADER,
    ]
    for r in report.rows:
        lines.append(",".join([str(r.K)] + [fmt(v) for v in (
            r.speedup_pred, r.speedup_obs, r.efficiency_pred, r.efficiency_obs, r.deviation)]))
    return "\n".join(lines) + "\n"


def write_comparison(path, report: ComparisonReport) -> None:
    atomic_write(path, dumps_comparison(report))


# -- solve reports ------------------------------------------------------------

def solve_report(result: SolveResult, variant: str, extra: Optional[dict] = None) -> dict:
    doc = {
        "variant": variant,
        "n": int(result.x.shape[0]),
        "iterations": result.iterations,
        "converged": result.converged,
        "residual_norm": result.residual_norm,
        "x": result.x.tolist(),
        "trace": [asdict(t) for t in result.iteration_times],
    }
    if extra:
        doc.update(extra)
    return doc


def write_solve_report(path, result: SolveResult, variant: str, extra: Optional[dict] = None) -> None:
    doc = solve_report(result, variant, extra)
    # json would emit NaN/Infinity, which is not JSON
    if not all(math.isfinite(v) for v in doc["x"]):
        raise FormatError("refusing to write a non-finite solution vector")
    atomic_write(path, json.dumps(doc, indent=1) + "\n")


# -- run configuration --------------------------------------------------------

PROBLEM_KINDS = ("file", "paper-system", "random-dd")


@dataclass
class RunConfig:
    """Declarative description of one solve.

    problem   one of ``file`` (needs ``matrix``), ``paper-system`` (needs ``n``)
              or ``random-dd`` (needs ``n``; ``seed`` defaults to 0)
    variant   ``sequential``, ``jacobi-m`` (default) or ``jacobi-mr``
    eps       squared-norm stopping tolerance, default 1e-6
    max_iters iteration budget, default 10000
    workers   K, default 1
    backend   ``sequential``, ``in-process`` (default) or ``multi-process``
    output    path of the JSON result report, optional
    """

    problem: str = "random-dd"
    matrix: Optional[str] = None
    n: Optional[int] = None
    seed: int = 0
    variant: str = "jacobi-m"
    eps: float = 1e-6
    max_iters: int = 10000
    workers: int = 1
    backend: str = "in-process"
    timeout: float = 30.0
    output: Optional[str] = None

    def __post_init__(self) -> None:
        if self.problem not in PROBLEM_KINDS:
            raise FormatError(f"problem must be one of {', '.join(PROBLEM_KINDS)}, got {self.problem!r}")
        if self.problem == "file" and not self.matrix:
            raise FormatError("problem 'file' needs 'matrix'")
        if self.problem != "file" and (self.n is None or self.n < 1):
            raise FormatError(f"problem {self.problem!r} needs a positive 'n'")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise FormatError(f"unknown run config keys: {', '.join(unknown)}")
        return cls(**doc)

    def load_system(self) -> LinearSystem:
        from .jacobi import gen_dd_system, gen_paper_system

        if self.problem == "file":
            return read_matrix(self.matrix)
        if self.problem == "paper-system":
            return gen_paper_system(self.n)
        return gen_dd_system(self.n, self.seed)


def read_run_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad run config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError("run config must be a JSON object")
    return RunConfig.from_dict(doc)
