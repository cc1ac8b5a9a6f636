"""Jacobi iteration for Ax = b: sequential reference, Jacobi-M and Jacobi-MR.

Jacobi-M maps a row kernel over the row numbers of C; each worker returns its
block of coordinates of the next approximation. Jacobi-MR maps a column
kernel over the column numbers and folds the scaled columns with vector
addition; workers return partial sums and the master adds them and d.

Public index arguments (``fx_m``, ``fx_mr``, reported rows) are 1-based.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .list_ops import map_list, par_map_reduce, reduce_list
from .runtime import FarmConfig, FarmPlugin, IterationTrace, run_farm, wire

VARIANTS = ("sequential", "jacobi-m", "jacobi-mr")


class ZeroDiagonalError(ValueError):
    def __init__(self, row: int):
        super().__init__(f"zero diagonal entry in row {row}")
        self.row = row


class DivergenceError(ArithmeticError):
    def __init__(self, iteration: int):
        super().__init__(f"iterate {iteration} contains NaN or Inf")
        self.iteration = iteration


@dataclass
class LinearSystem:
    A: np.ndarray
    b: np.ndarray
    # known exact solution, when the generator has one
    solution: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A)
        self.b = np.asarray(self.b)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ValueError(f"A must be square, got shape {self.A.shape}")
        if self.b.shape != (self.A.shape[0],):
            raise ValueError(f"b must have length {self.A.shape[0]}, got shape {self.b.shape}")

    @property
    def n(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class IterationOperator:
    C: np.ndarray
    d: np.ndarray

    @property
    def n(self) -> int:
        return self.d.shape[0]


@dataclass
class SolveConfig:
    eps: float = 1e-6
    max_iters: int = 10000
    workers: int = 1
    variant: str = "sequential"
    keep_iterates: bool = False

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        self.variant = normalize_variant(self.variant)


def normalize_variant(name: str) -> str:
    key = name.strip().lower()
    key = {"seq": "sequential", "m": "jacobi-m", "mr": "jacobi-mr"}.get(key, key)
    if key not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    return key


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float
    iteration_times: List[IterationTrace] = field(default_factory=list)
    iterates: List[np.ndarray] = field(default_factory=list)


def build_operator(system: LinearSystem) -> IterationOperator:
    A = np.asarray(system.A, dtype=np.float64)
    b = np.asarray(system.b, dtype=np.float64)
    diag = A.diagonal().copy()
    zero = np.flatnonzero(diag == 0)
    if zero.size:
        raise ZeroDiagonalError(int(zero[0]) + 1)
    C = -A / diag[:, None]
    np.fill_diagonal(C, 0.0)
    C = np.ascontiguousarray(C)
    d = b / diag
    C.setflags(write=False)
    d.setflags(write=False)
    return IterationOperator(C=C, d=d)


def _as_vector(op: IterationOperator, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (op.n,):
        raise ValueError(f"expected a vector of length {op.n}, got shape {x.shape}")
    return x


def jacobi_step_reference(op: IterationOperator, x) -> np.ndarray:
    """C x + d, each row summed left to right."""
    x = _as_vector(op, x)
    out = np.empty(op.n)
    _kernels.affine_rows(op.C, x, op.d, 0, op.n, out)
    return out


def fx_m(op: IterationOperator, x, i: int) -> float:
    """Coordinate i (1-based) of the next approximation."""
    if not 1 <= i <= op.n:
        raise IndexError(f"row index {i} outside 1..{op.n}")
    x = _as_vector(op, x)
    out = np.empty(1)
    _kernels.affine_rows(op.C, x, op.d, i - 1, i, out)
    return float(out[0])


def fx_mr(op: IterationOperator, x, j: int) -> np.ndarray:
    """Column j (1-based) of C scaled by x_j."""
    if not 1 <= j <= op.n:
        raise IndexError(f"column index {j} outside 1..{op.n}")
    x = _as_vector(op, x)
    return x[j - 1] * op.C[:, j - 1]


def vector_oplus(u, v) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    # overflow surfaces as inf and is reported as divergence by the caller
    with np.errstate(over="ignore", invalid="ignore"):
        return u + v


def stop_check(x_new, x_old, eps: float) -> bool:
    x_new = np.asarray(x_new, dtype=np.float64)
    x_old = np.asarray(x_old, dtype=np.float64)
    if x_new.shape != x_old.shape:
        raise ValueError(f"length mismatch: {x_new.shape} vs {x_old.shape}")
    diff = x_new - x_old
    return bool(np.dot(diff, diff) < eps)


def jacobi_m_step_lists(op: IterationOperator, x, rows: Optional[Sequence[int]] = None) -> np.ndarray:
    """One Jacobi-M step through ``map_list`` over 1-based row numbers.

    ``rows`` may be any permutation of 1..n; the result is placed by row.
    """
    x = _as_vector(op, x)
    rows = list(range(1, op.n + 1)) if rows is None else list(rows)
    values = map_list(lambda i: fx_m(op, x, i), rows)
    out = np.empty(op.n)
    out[np.asarray(rows, dtype=np.intp) - 1] = values
    return out


def jacobi_mr_step_lists(op: IterationOperator, x, parts: int = 1, executor=None) -> np.ndarray:
    """One Jacobi-MR step through ``par_map_reduce`` over column numbers."""
    x = _as_vector(op, x)
    columns = list(range(1, op.n + 1))
    total = par_map_reduce(
        lambda j: fx_mr(op, x, j), vector_oplus, np.zeros(op.n), columns, parts, executor
    )
    return total + op.d


@dataclass
class DominanceReport:
    row_dominant: np.ndarray
    row_strict: np.ndarray

    @property
    def any_strict(self) -> bool:
        return bool(self.row_strict.any())

    @property
    def dominant(self) -> bool:
        return bool(self.row_dominant.all()) and self.any_strict

    @property
    def failing_rows(self) -> List[int]:
        return [int(i) + 1 for i in np.flatnonzero(~self.row_dominant)]


def diag_dominance_check(system: LinearSystem) -> DominanceReport:
    A = np.abs(np.asarray(system.A))
    diag = A.diagonal()
    off = A.sum(axis=1) - diag
    return DominanceReport(row_dominant=diag >= off, row_strict=diag > off)


def gen_paper_system(n: int, dtype=np.float64) -> LinearSystem:
    """Ones off the diagonal, a_ii = i, b_i = n + i - 1 (1-based i)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    A = np.ones((n, n), dtype=dtype)
    idx = np.arange(1, n + 1)
    A[idx - 1, idx - 1] = idx
    b = (n + idx - 1).astype(dtype)
    return LinearSystem(A=A, b=b, solution=np.ones(n))


def gen_dd_system(n: int, seed: int) -> LinearSystem:
    """Random strictly diagonally dominant system with a known solution."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, size=(n, n))
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, np.abs(A).sum(axis=1) + 1.0)
    x_star = rng.uniform(-1.0, 1.0, size=n)
    return LinearSystem(A=A, b=A @ x_star, solution=x_star)


@dataclass
class JacobiState:
    x: np.ndarray
    iteration: int = 0
    converged: bool = False


class _JacobiPlugin(FarmPlugin):
    def __init__(
        self,
        eps: float = 1e-6,
        max_iters: int = 10000,
        fixed_iterations: bool = False,
        check_divergence: bool = True,
        keep_iterates: bool = False,
    ):
        self.eps = eps
        self.max_iters = max_iters
        self.fixed_iterations = fixed_iterations
        self.check_divergence = check_divergence
        self.keep_iterates = keep_iterates
        self.iterates: List[np.ndarray] = []

    def init(self, data: LinearSystem) -> None:
        self.op = build_operator(data)

    def list_length(self) -> int:
        return self.op.n

    def initial_state(self) -> JacobiState:
        self.iterates = []
        return JacobiState(x=self.op.d.copy())

    def make_order(self, state: JacobiState) -> np.ndarray:
        return state.x

    def encode_input(self, data: LinearSystem) -> bytes:
        return wire.pack_vector(np.asarray(data.A, dtype=np.float64)) + wire.pack_vector(data.b)

    def decode_input(self, payload) -> LinearSystem:
        A, offset = wire.unpack_vector(payload)
        b, _ = wire.unpack_vector(payload, offset)
        return LinearSystem(A=A.reshape(b.size, b.size), b=b)

    def _advance(self, state: JacobiState, x_new: np.ndarray):
        k = state.iteration + 1
        if self.check_divergence and not np.isfinite(x_new).all():
            raise DivergenceError(k)
        if self.keep_iterates:
            self.iterates.append(x_new.copy())
        converged = not self.fixed_iterations and stop_check(x_new, state.x, self.eps)
        stop = converged or k >= self.max_iters
        return JacobiState(x=x_new, iteration=k, converged=converged), stop


class JacobiMPlugin(_JacobiPlugin):
    def process_order(self, x: np.ndarray, part: range) -> np.ndarray:
        out = np.empty(len(part))
        _kernels.affine_rows(self.op.C, x, self.op.d, part.start, part.stop, out)
        return out

    def evaluate(self, partials, state):
        return self._advance(state, np.concatenate(partials))


class JacobiMRPlugin(_JacobiPlugin):
    def process_order(self, x: np.ndarray, part: range) -> np.ndarray:
        out = np.zeros(self.op.n)
        if len(part):
            _kernels.scaled_column_sum(self.op.C, x, part.start, part.stop, out)
        return out

    def evaluate(self, partials, state):
        total = reduce_list(vector_oplus, np.zeros(self.op.n), list(partials))
        return self._advance(state, total + self.op.d)


PLUGINS = {"jacobi-m": JacobiMPlugin, "jacobi-mr": JacobiMRPlugin}


def residual_norm(system: LinearSystem, x) -> float:
    A = np.asarray(system.A, dtype=np.float64)
    return float(np.linalg.norm(A @ x - np.asarray(system.b, dtype=np.float64)))


def _solve_sequential(system: LinearSystem, cfg: SolveConfig) -> SolveResult:
    op = build_operator(system)
    x = op.d.copy()
    traces = []
    iterates = []
    converged = False
    k = 0
    while k < cfg.max_iters:
        t0 = time.perf_counter()
        x_new = jacobi_step_reference(op, x)
        t1 = time.perf_counter()
        k += 1
        if not np.isfinite(x_new).all():
            raise DivergenceError(k)
        converged = stop_check(x_new, x, cfg.eps)
        t2 = time.perf_counter()
        traces.append(IterationTrace(k - 1, 0.0, t1 - t0, 0.0, t2 - t1))
        if cfg.keep_iterates:
            iterates.append(x_new.copy())
        x = x_new
        if converged:
            break
    return SolveResult(
        x=x,
        iterations=k,
        converged=converged,
        residual_norm=residual_norm(system, x),
        iteration_times=traces,
        iterates=iterates,
    )


def solve(
    system: LinearSystem,
    cfg: Optional[SolveConfig] = None,
    farm: Union[FarmConfig, str, None] = None,
) -> SolveResult:
    """Run the configured Jacobi variant starting from x = d.

    ``farm`` picks the runtime for the farm variants: a FarmConfig, a backend
    name, or None for the in-process backend. Its worker count must agree
    with ``cfg.workers``. Running out of iterations is reported through
    ``converged=False``; NaN or Inf in an iterate raises DivergenceError.
    """
    cfg = cfg or SolveConfig()
    if cfg.variant == "sequential":
        return _solve_sequential(system, cfg)
    if farm is None or isinstance(farm, str):
        farm = FarmConfig(workers=cfg.workers, backend=farm or "in-process")
    elif farm.workers != cfg.workers:
        raise ValueError(f"farm has {farm.workers} workers but the solve asks for {cfg.workers}")
    plugin = PLUGINS[cfg.variant](
        eps=cfg.eps, max_iters=cfg.max_iters, keep_iterates=cfg.keep_iterates
    )
    state, traces = run_farm(plugin, farm, system)
    return SolveResult(
        x=state.x,
        iterations=state.iteration,
        converged=state.converged,
        residual_norm=residual_norm(system, state.x),
        iteration_times=traces,
        iterates=plugin.iterates,
    )
