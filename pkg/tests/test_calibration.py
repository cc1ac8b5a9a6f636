import logging

import pytest

from bsfkit.calibration import (
    ComparisonError,
    LoopbackEcho,
    ObservationRecord,
    compare,
    measure_latency,
    measure_tau_op,
    measure_tau_tr,
    observation_records,
    sweep,
    time_cell,
)
from bsfkit.cost_model import PredictionCurve, Variant
from bsfkit.jacobi import gen_dd_system


@pytest.fixture(scope="module")
def echo():
    with LoopbackEcho() as e:
        yield e


def test_echo_round_trip(echo):
    assert echo.round_trip(b"x") > 0
    assert echo.round_trip(bytes(100_000)) > 0


def test_latency_plausible(echo):
    L = measure_latency(200, echo)
    assert 1e-7 < L < 1e-2


def test_tau_op_plausible():
    tau = measure_tau_op(2_000_000)
    assert 1e-11 < tau < 1e-6


def test_tau_op_repeatable():
    a, b = measure_tau_op(5_000_000), measure_tau_op(5_000_000)
    assert 0.5 < a / b < 2.0


def test_tau_tr_plausible(echo):
    tau = measure_tau_tr(200_000, echo=echo)
    assert 0 < tau < 1e-5


def test_tau_tr_falls_back_when_latency_dominates(echo, caplog):
    with caplog.at_level(logging.WARNING, logger="bsfkit.calibration"):
        tau = measure_tau_tr(1000, latency=10.0, repeats=1, echo=echo)
    assert tau > 0
    assert "unadjusted" in caplog.text


def test_measure_latency_rejects_zero_rounds():
    with pytest.raises(ValueError):
        measure_latency(0)


def test_observation_records():
    recs = observation_records("m", 100, {1: 2.0, 2: 1.0, 4: 0.8})
    assert [(r.K, r.speedup_obs, r.efficiency_obs) for r in recs] == [
        (1, 1.0, 1.0), (2, 2.0, 1.0), (4, 2.5, 0.625)]
    with pytest.raises(ValueError):
        observation_records("m", 100, {2: 1.0})


def test_time_cell_positive():
    t = time_cell("mr", gen_dd_system(60, 1), 2, 4)
    assert t > 0


def test_sweep_small():
    recs = sweep("m", 200, [2], iters=3, repeats=1)
    assert [r.K for r in recs] == [2]
    assert recs[0].speedup_obs > 0 and recs[0].variant is Variant.M
    recs = sweep("mr", 100, [1], iters=2, repeats=1)
    assert recs[0].speedup_obs == 1.0
    with pytest.raises(ValueError):
        sweep("m", 10, [1], iters=1)
    with pytest.raises(ValueError):
        sweep("m", 10, [])


def _curve(speedups, variant=Variant.M, n=100):
    rows = [(K, a, a / K) for K, a in enumerate(speedups, start=1)]
    return PredictionCurve(variant, n, rows, scalability_bound=2.2)


def _obs(speedups, variant=Variant.M, n=100, ks=None):
    ks = ks or range(1, len(speedups) + 1)
    return [ObservationRecord(n, variant, K, 1.0 / a, a, a / K) for K, a in zip(ks, speedups)]


def test_compare_identical():
    rep = compare(_curve([1.0, 1.8, 2.1]), _obs([1.0, 1.8, 2.1]))
    assert rep.max_deviation == 0.0
    assert rep.predicted_optimum == rep.observed_optimum == 3
    assert rep.argmax_agrees


def test_compare_deviation():
    rep = compare(_curve([1.0, 2.2, 2.0]), _obs([1.0, 2.0, 2.0]))
    assert rep.rows[1].deviation == pytest.approx(0.1)
    obs = _obs([1.0, 2.2 / 1.1])
    rep = compare(_curve([1.0, 2.0]), [obs[0], ObservationRecord(100, Variant.M, 2, 0.5, 2.2, 1.1)])
    assert rep.max_deviation == pytest.approx(0.2 / 2.2)
    assert rep.max_deviation == pytest.approx(0.0909, abs=1e-4)


def test_compare_optimum_outside_measured_range():
    curve = _curve([1.0, 1.5, 1.9, 2.0, 1.95])
    rep = compare(curve, _obs([1.0, 1.4], ks=[1, 2]))
    assert rep.predicted_optimum == 4
    assert rep.predicted_optimum_in_range == 2
    assert rep.argmax_agrees


def test_compare_errors():
    curve = _curve([1.0, 1.5])
    with pytest.raises(ComparisonError):
        compare(curve, [])
    with pytest.raises(ComparisonError):
        compare(curve, _obs([1.0], variant=Variant.MR))
    with pytest.raises(ComparisonError):
        compare(curve, _obs([1.0], n=99))
    with pytest.raises(ComparisonError):
        compare(curve, _obs([1.0, 1.0], ks=[1, 1]))
    with pytest.raises(ComparisonError):
        compare(curve, _obs([1.0, 3.0], ks=[1, 3]))
