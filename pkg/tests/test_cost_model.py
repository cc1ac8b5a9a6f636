import math

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from bsfkit.cost_model import (
    PRESETS,
    BsfMCosts,
    BsfMRCosts,
    CostModelError,
    MachineConstants,
    PredictionCurve,
    Variant,
    efficiency_m,
    efficiency_mr,
    jacobi_m_costs,
    jacobi_m_counts,
    jacobi_mr_bound,
    jacobi_mr_costs,
    jacobi_mr_counts,
    optimal_workers,
    predict_curve,
    scalability_bound_m,
    scalability_bound_mr,
    speedup_m,
    speedup_mr,
)

TORNADO = PRESETS["paper-tornado"]

times = st.floats(min_value=1e-9, max_value=10.0, allow_nan=False)
workers = st.integers(min_value=1, max_value=512)


def m_costs(K, L, t_s, t_w, t_R, t_p):
    return BsfMCosts(K=K, L=L, t_s=t_s, t_w=t_w, t_R=t_R, t_p=t_p)


def test_tornado_preset_values():
    assert (TORNADO.L, TORNADO.tau_op, TORNADO.tau_tr) == (1.5e-5, 2.9e-8, 1.9e-7)


@pytest.mark.parametrize("field", ["L", "tau_op", "tau_tr"])
@pytest.mark.parametrize("bad", [0.0, -1e-9, float("inf"), float("nan")])
def test_machine_constants_reject(field, bad):
    kwargs = dict(L=1e-5, tau_op=1e-9, tau_tr=1e-8)
    kwargs[field] = bad
    with pytest.raises(CostModelError):
        MachineConstants(**kwargs)


@pytest.mark.parametrize("kwargs", [
    dict(K=0), dict(K=1.5), dict(t_s=-1.0), dict(t_w=float("nan")), dict(L=0.0),
])
def test_bsf_m_costs_domain(kwargs):
    base = dict(K=2, L=1e-5, t_s=1e-4, t_w=1.0, t_R=1e-4, t_p=1e-5)
    base.update(kwargs)
    with pytest.raises(CostModelError):
        BsfMCosts(**base)


def test_bsf_mr_costs_domain():
    with pytest.raises(CostModelError):
        BsfMRCosts(K=1, L=1e-5, t_s=0, t_w=1, t_p=0, t_r=0, t_a=0, l=0)
    with pytest.raises(CostModelError):
        BsfMRCosts(K=1, L=1e-5, t_s=0, t_w=1, t_p=0, t_r=-1, t_a=0, l=1)


def test_jacobi_m_costs_n1500():
    c = jacobi_m_costs(1500, 20, TORNADO)
    assert c.t_s == pytest.approx(2.85e-4, rel=1e-12)
    assert c.t_w == pytest.approx(0.1305, rel=1e-12)
    assert c.t_R == pytest.approx(2.85e-4, rel=1e-12)
    assert c.t_p == pytest.approx(8.7058e-5, rel=1e-12)
    assert jacobi_m_costs(1, 1, TORNADO).t_w == pytest.approx(2 * TORNADO.tau_op)


def test_jacobi_counts():
    c = jacobi_m_counts(1500, 20)
    assert (c.c_s, c.c_Map, c.c_r, c.c_p) == (1500, 2 * 1500**2, 75.0, 3002)
    c = jacobi_mr_counts(1500, 20)
    assert (c.c_s, c.c_Map, c.c_a, c.c_r, c.c_p) == (1500, 1500**2, 1500, 1500, 4500)


def test_jacobi_mr_costs():
    c = jacobi_mr_costs(1500, 20, TORNADO)
    assert c.t_w == pytest.approx(TORNADO.tau_op * (1500**2 + 1500 * 1480), rel=1e-12)
    assert c.t_a == pytest.approx(TORNADO.tau_op * 1500, rel=1e-12)
    assert c.t_p == pytest.approx(3 * TORNADO.tau_op * 1500, rel=1e-12)
    assert c.t_s == c.t_r == pytest.approx(TORNADO.tau_tr * 1500, rel=1e-12)
    assert c.l == 1500
    assert jacobi_mr_costs(40, 40, TORNADO).t_w == pytest.approx(TORNADO.tau_op * 40**2, rel=1e-12)
    with pytest.raises(CostModelError):
        jacobi_mr_costs(10, 11, TORNADO)


def test_speedup_m_tornado_example():
    # 9.940629040199717 from tests/oracles.py in exact arithmetic
    c = jacobi_m_costs(1500, 20, TORNADO)
    expected = float(oracles.speedup_m(20, **oracles.jacobi_m_terms(1500)))
    assert expected == pytest.approx(9.940629040199717, rel=1e-15)
    assert speedup_m(c) == pytest.approx(expected, rel=1e-12)
    assert efficiency_m(c) == pytest.approx(0.4970314520099859, rel=1e-12)


def test_speedup_m_communication_bound():
    c = m_costs(10, 1e-5, 1e-4, 1e-12, 1e-4, 1e-5)
    assert speedup_m(c) < 1


def test_efficiency_m_compute_bound():
    c = m_costs(2, 1e-6, 1e-6, 1e6 * 4e-6, 1e-6, 1e-6)
    assert efficiency_m(c) >= 0.999


def test_scalability_bound_m():
    assert scalability_bound_m(m_costs(3, 1e-3, 2e-3, 4e-3, 0, 0)) == 1.0
    assert scalability_bound_m(jacobi_m_costs(1500, 1, TORNADO)) == pytest.approx(20.354009783964297, rel=1e-12)
    assert scalability_bound_m(jacobi_m_costs(10000, 1, TORNADO)) == pytest.approx(54.81953435729147, rel=1e-12)
    with pytest.raises(CostModelError):
        scalability_bound_m(m_costs(1, 1e-3, 0, 0, 0, 0))


def test_speedup_mr_reduces_to_m():
    for K in (1, 3, 17):
        mr = BsfMRCosts(K=K, L=1e-5, t_s=2e-4, t_w=0.3, t_p=1e-4, t_r=0.0, t_a=0.0, l=1)
        m = m_costs(K, 1e-5, 2e-4, 0.3, 0.0, 1e-4)
        assert speedup_mr(mr) == pytest.approx(speedup_m(m), rel=1e-13)


def test_speedup_mr_jacobi_example():
    c = jacobi_mr_costs(1500, 20, TORNADO)
    a = speedup_mr(c)
    assert 0 < a < 20
    assert a == pytest.approx(float(oracles.speedup_mr(20, **oracles.jacobi_mr_terms(1500, 20))), rel=1e-12)


def test_scalability_bound_mr():
    c = BsfMRCosts(K=1, L=1.0, t_s=1.0, t_w=4.0, t_p=0.0, t_r=1.0, t_a=1.0, l=1)
    assert scalability_bound_mr(c) == 1.0
    c10k = jacobi_mr_costs(10000, 1, TORNADO)
    # K-independent form at K=1, recomputed in tests/oracles-style exact terms
    t = oracles.jacobi_mr_terms(10000, 1)
    expected = math.sqrt((t["t_w"] + t["l"] * t["t_a"]) / (2 * t["L"] + t["t_s"] + t["t_r"] + t["t_a"]))
    assert scalability_bound_mr(c10k) == pytest.approx(expected, rel=1e-12)
    doubled = BsfMRCosts(**{**c10k.__dict__, "t_w": 2 * c10k.t_w})
    ratio = scalability_bound_mr(doubled) / scalability_bound_mr(c10k)
    assert 1 < ratio < 2


@pytest.mark.parametrize("n", [1500, 5000, 10000, 16000])
def test_jacobi_mr_fixed_point_matches_quadratic(n):
    assert jacobi_mr_bound(n, TORNADO) == pytest.approx(oracles.jacobi_mr_bound_quadratic(n), rel=1e-9)


@settings(max_examples=300, deadline=None)
@given(times, times, times, times, times, workers)
def test_m_identities(L, t_s, t_w, t_R, t_p, K):
    one = m_costs(1, L, t_s, t_w, t_R, t_p)
    assert speedup_m(one) == 1.0
    c = m_costs(K, L, t_s, t_w, t_R, t_p)
    closed = float(oracles.efficiency_m(K, L, t_s, t_w, t_R, t_p))
    assert efficiency_m(c) == pytest.approx(closed, rel=1e-12)


@settings(max_examples=300, deadline=None)
@given(times, times, times, times, times, times, st.integers(1, 10_000), workers)
def test_mr_identities(L, t_s, t_w, t_p, t_r, t_a, l, K):
    one = BsfMRCosts(K=1, L=L, t_s=t_s, t_w=t_w, t_p=t_p, t_r=t_r, t_a=t_a, l=l)
    assert speedup_mr(one) == 1.0
    c = BsfMRCosts(K=K, L=L, t_s=t_s, t_w=t_w, t_p=t_p, t_r=t_r, t_a=t_a, l=l)
    closed = float(oracles.efficiency_mr(K, L, t_s, t_w, t_p, t_r, t_a, l))
    assert efficiency_mr(c) == pytest.approx(closed, rel=1e-12)
    assert efficiency_mr(c) == speedup_mr(c) / K


@settings(max_examples=200, deadline=None)
@given(times, times, times, times, times)
def test_m_unimodal(L, t_s, t_w, t_R, t_p):
    def a(K):
        return speedup_m(m_costs(K, L, t_s, t_w, t_R, t_p))

    k_max = min(2000, max(8, math.ceil(4 * math.sqrt(t_w / (2 * L + t_s)))))
    values = [a(K) for K in range(1, k_max + 1)]
    peak = values.index(max(values))
    tail = values[peak:]
    assert all(y <= x * (1 + 1e-12) for x, y in zip(tail, tail[1:]))


def test_predict_curve_single_row():
    curve = predict_curve("m", 1500, 1, TORNADO)
    assert curve.rows == [(1, 1.0, 1.0)]
    assert optimal_workers(curve) == 1


def test_predict_curve_tornado_m():
    curve = predict_curve(Variant.M, 1500, 64, TORNADO)
    assert [r[0] for r in curve.rows] == list(range(1, 65))
    for K, a, e in curve.rows:
        assert e == pytest.approx(a / K, rel=1e-12)
    best = optimal_workers(curve)
    assert best in (20, 21)
    assert abs(best - curve.scalability_bound) <= 1


def test_predict_curve_mr_unimodal():
    curve = predict_curve("mr", 16000, 128, TORNADO)
    a = curve.speedups
    peak = a.index(max(a))
    assert all(x < y for x, y in zip(a[:peak], a[1:peak + 1]))
    assert all(x >= y for x, y in zip(a[peak:], a[peak + 1:]))
    assert abs(optimal_workers(curve) - curve.scalability_bound) <= 1


def test_optimal_workers_ties_and_empty():
    curve = PredictionCurve(Variant.M, 10, rows=[(1, 1.0, 1.0), (2, 1.5, 0.75), (3, 1.5, 0.5)])
    assert optimal_workers(curve) == 2
    with pytest.raises(CostModelError):
        optimal_workers(PredictionCurve(Variant.M, 10))


def test_variant_parse():
    assert Variant.parse("m") is Variant.M
    assert Variant.parse("Jacobi-MR") is Variant.MR
    with pytest.raises(CostModelError):
        Variant.parse("x")
