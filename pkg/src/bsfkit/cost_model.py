"""Closed-form BSF cost metrics.

Speedup, parallel efficiency and the upper scalability bound for the Map-only
(BSF-M) and Map/Reduce (BSF-MR) representations, together with the cost
parameters of the two Jacobi instantiations.

All functions are pure and operate on plain floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple, Union


class CostModelError(ValueError):
    """Invalid cost parameters or a request outside a formula's domain."""


class Variant(str, Enum):
    M = "BSF-M"
    MR = "BSF-MR"

    @classmethod
    def parse(cls, value: Union[str, "Variant"]) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "m": cls.M, "bsf-m": cls.M, "jacobi-m": cls.M,
            "mr": cls.MR, "bsf-mr": cls.MR, "jacobi-mr": cls.MR,
        }
        try:
            return aliases[key]
        except KeyError:
            raise CostModelError(f"unknown variant {value!r} (expected m or mr)") from None


def _check_time(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise CostModelError(f"{name} must be a finite non-negative time, got {value!r}")


def _check_workers(K: int) -> None:
    if isinstance(K, bool) or int(K) != K or K < 1:
        raise CostModelError(f"K must be an integer >= 1, got {K!r}")


@dataclass(frozen=True)
class MachineConstants:
    """Calibrated hardware timings in seconds.

    L is the latency of a 1-byte message, tau_op the time of one arithmetic or
    comparison operation, tau_tr the transfer time of one double excluding
    latency.
    """

    L: float
    tau_op: float
    tau_tr: float

    def __post_init__(self) -> None:
        for name in ("L", "tau_op", "tau_tr"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                raise CostModelError(f"{name} must be positive and finite, got {value!r}")


PRESETS = {
    "paper-tornado": MachineConstants(L=1.5e-5, tau_op=2.9e-8, tau_tr=1.9e-7),
}


def preset(name: str) -> MachineConstants:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise CostModelError(f"unknown preset {name!r} (known: {known})") from None


@dataclass(frozen=True)
class BsfMCosts:
    K: int
    L: float
    t_s: float
    t_w: float
    t_R: float
    t_p: float

    def __post_init__(self) -> None:
        _check_workers(self.K)
        for name in ("t_s", "t_w", "t_R", "t_p"):
            _check_time(name, getattr(self, name))
        if not math.isfinite(self.L) or self.L <= 0:
            raise CostModelError(f"L must be positive, got {self.L!r}")


@dataclass(frozen=True)
class BsfMRCosts:
    K: int
    L: float
    t_s: float
    t_w: float
    t_p: float
    t_r: float
    t_a: float
    l: int

    def __post_init__(self) -> None:
        _check_workers(self.K)
        if int(self.l) != self.l or self.l < 1:
            raise CostModelError(f"reduce list length l must be an integer >= 1, got {self.l!r}")
        for name in ("t_s", "t_w", "t_p", "t_r", "t_a"):
            _check_time(name, getattr(self, name))
        if not math.isfinite(self.L) or self.L <= 0:
            raise CostModelError(f"L must be positive, got {self.L!r}")


@dataclass(frozen=True)
class CostCounts:
    """Operation and transfer counts for one iteration.

    ``c_r`` is the number of reals one worker returns; for Jacobi-M it is the
    block size n/K, kept real-valued so that curves stay smooth when K does
    not divide n.
    """

    c_s: int
    c_Map: int
    c_r: float
    c_p: int
    c_a: int = 0


def speedup_m(c: BsfMCosts) -> float:
    # grouped so that numerator and denominator round identically at K = 1
    K = c.K
    send = 2 * c.L + c.t_s
    master = c.t_R + c.t_p
    num = K * ((send + master) + c.t_w)
    den = (K * K * send + K * master) + c.t_w
    return num / den


def efficiency_m(c: BsfMCosts) -> float:
    return speedup_m(c) / c.K


def scalability_bound_m(c: BsfMCosts) -> float:
    """Worker count at which the BSF-M speedup peaks, sqrt(t_w / (2L + t_s))."""
    denom = 2 * c.L + c.t_s
    if c.t_w <= 0:
        raise CostModelError("scalability bound needs t_w > 0")
    if denom <= 0:
        raise CostModelError("scalability bound needs 2L + t_s > 0")
    return math.sqrt(c.t_w / denom)


def speedup_mr(c: BsfMRCosts) -> float:
    # K(2L + t_s + t_r + t_a) - t_a rewritten as K(2L + t_s + t_r) + (K - 1) t_a,
    # which keeps a(1) == 1 exact in floating point
    K = c.K
    comm = 2 * c.L + c.t_s + c.t_r
    work = c.t_w + c.l * c.t_a
    num = (comm + work) + c.t_p
    den = ((K * comm + (K - 1) * c.t_a) + work / K) + c.t_p
    return num / den


def efficiency_mr(c: BsfMRCosts) -> float:
    return speedup_mr(c) / c.K


def scalability_bound_mr(c: BsfMRCosts) -> float:
    work = c.t_w + c.l * c.t_a
    denom = 2 * c.L + c.t_s + c.t_r + c.t_a
    if work <= 0:
        raise CostModelError("scalability bound needs t_w + l*t_a > 0")
    if denom <= 0:
        raise CostModelError("scalability bound needs 2L + t_s + t_r + t_a > 0")
    return math.sqrt(work / denom)


def _check_dimension(n: int) -> None:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise CostModelError(f"dimension n must be an integer >= 1, got {n!r}")


def jacobi_m_counts(n: int, K: int) -> CostCounts:
    _check_dimension(n)
    _check_workers(K)
    return CostCounts(c_s=n, c_Map=2 * n * n, c_r=n / K, c_p=2 * n + 2)


def jacobi_mr_counts(n: int, K: int) -> CostCounts:
    _check_dimension(n)
    _check_workers(K)
    return CostCounts(c_s=n, c_Map=n * n, c_r=n, c_p=3 * n, c_a=n)


def jacobi_m_costs(n: int, K: int, mc: MachineConstants) -> BsfMCosts:
    counts = jacobi_m_counts(n, K)
    return BsfMCosts(
        K=K,
        L=mc.L,
        t_s=mc.tau_tr * counts.c_s,
        t_w=mc.tau_op * counts.c_Map,
        # K blocks of c_r = n/K reals each
        t_R=mc.tau_tr * n,
        t_p=mc.tau_op * counts.c_p,
    )


def jacobi_mr_costs(n: int, K: int, mc: MachineConstants) -> BsfMRCosts:
    counts = jacobi_mr_counts(n, K)
    if K > n:
        raise CostModelError(f"Jacobi-MR needs K <= n, got K={K}, n={n}")
    # each of the K workers folds n/K vectors: (n/K - 1) compositions apiece
    reduce_ops = (n - K) * counts.c_a
    return BsfMRCosts(
        K=K,
        L=mc.L,
        t_s=mc.tau_tr * counts.c_s,
        t_w=mc.tau_op * (counts.c_Map + reduce_ops),
        t_p=mc.tau_op * counts.c_p,
        t_r=mc.tau_tr * counts.c_r,
        t_a=mc.tau_op * counts.c_a,
        l=n,
    )


def jacobi_m_bound(n: int, mc: MachineConstants) -> float:
    return scalability_bound_m(jacobi_m_costs(n, 1, mc))


def jacobi_mr_bound(n: int, mc: MachineConstants, tol: float = 1e-9, max_iter: int = 100) -> float:
    """Jacobi-MR scalability bound.

    t_w depends on K, so the bound is the fixed point of
    K -> scalability_bound_mr(costs(K)), iterated from K = 1. K is kept real
    while iterating and clamped to [1, n].
    """
    _check_dimension(n)
    k = 1.0
    for _ in range(max_iter):
        k_next = _mr_bound_at(n, k, mc)
        if abs(k_next - k) < tol:
            return k_next
        k = k_next
    return k


def _mr_bound_at(n: int, K: float, mc: MachineConstants) -> float:
    K = min(max(K, 1.0), float(n))
    work = mc.tau_op * (n * n + n * (n - K)) + n * (mc.tau_op * n)
    denom = 2 * mc.L + mc.tau_tr * n + mc.tau_tr * n + mc.tau_op * n
    return math.sqrt(work / denom)


@dataclass
class PredictionCurve:
    variant: Variant
    n: int
    rows: List[Tuple[int, float, float]] = field(default_factory=list)
    scalability_bound: float = float("nan")

    @property
    def workers(self) -> List[int]:
        return [row[0] for row in self.rows]

    @property
    def speedups(self) -> List[float]:
        return [row[1] for row in self.rows]

    def speedup_at(self, K: int) -> float:
        for k, a, _ in self.rows:
            if k == K:
                return a
        raise KeyError(K)


def predict_curve(variant, n: int, K_max: int, mc: MachineConstants) -> PredictionCurve:
    variant = Variant.parse(variant)
    _check_workers(K_max)
    rows = []
    for K in range(1, K_max + 1):
        if variant is Variant.M:
            c = jacobi_m_costs(n, K, mc)
            a, e = speedup_m(c), efficiency_m(c)
        else:
            c = jacobi_mr_costs(n, K, mc)
            a, e = speedup_mr(c), efficiency_mr(c)
        rows.append((K, a, e))
    if variant is Variant.M:
        bound = jacobi_m_bound(n, mc)
    else:
        bound = jacobi_mr_bound(n, mc)
    return PredictionCurve(variant=variant, n=n, rows=rows, scalability_bound=bound)


def optimal_workers(curve: PredictionCurve) -> int:
    if not curve.rows:
        raise CostModelError("optimal_workers needs a non-empty curve")
    best_K, best_a = curve.rows[0][0], curve.rows[0][1]
    for K, a, _ in curve.rows[1:]:
        # strict > keeps the smaller K on ties
        if a > best_a or (a == best_a and K < best_K):
            best_K, best_a = K, a
    return best_K
