import numpy as np
import pytest
from hypothesis import given, strategies as st

from lmbench.core import ContractError, ImageSpace, LandmarkSet
from lmbench.metrics import MetricsReport, SpacingModel, mre, sdr, spacing_factor

from oracles import mre_loop, sdr_loop

SP = ImageSpace(2000, 2000)


def sets(arr):
    return [LandmarkSet(a, SP) for a in arr]


def test_wrist_factor():
    truth = LandmarkSet([[0, 0], [5, 5], [6, 6], [7, 7], [0, 100]], SP)
    assert spacing_factor(truth, SpacingModel.wrist(0, 4)) == 0.5


def test_wrist_factor_uses_formula():
    truth = LandmarkSet([[10, 20], [0, 0], [0, 0], [0, 0], [40, 60]], SP)
    assert spacing_factor(truth, SpacingModel.wrist()) == 50.0 / np.hypot(30, 40)


def test_fixed_and_pixel_factors():
    truth = LandmarkSet([[1, 1]], SP)
    assert spacing_factor(truth, SpacingModel.fixed(0.1)) == 0.1
    assert spacing_factor(truth, SpacingModel.pixel()) == 1.0


def test_coincident_wrist_endpoints():
    truth = LandmarkSet([[3, 3]] * 5, SP)
    with pytest.raises(ContractError):
        spacing_factor(truth, SpacingModel.wrist())


def test_mre_simple():
    t = sets([[[0, 0], [1, 1]]])
    p = sets([[[3, 4], [1, 1]]])
    assert mre(p, t, SpacingModel.pixel()) == 2.5
    assert mre(t, t, SpacingModel.pixel()) == 0.0


def test_sdr_inclusive_boundary():
    t = sets([[[0, 0], [0, 0], [0, 0]]])
    p = sets([[[1, 0], [3, 0], [5, 0]]])
    out = sdr(p, t, SpacingModel.pixel(), [3])
    assert out[3.0] == pytest.approx(200 / 3)
    assert sdr(p, t, SpacingModel.pixel(), [float("inf")])[float("inf")] == 100.0
    # d == t exactly, including a 3-4-5 triangle
    assert sdr(sets([[[3, 4]]]), sets([[[0, 0]]]), SpacingModel.pixel(), [5.0])[5.0] == 100.0


def test_empty_inputs():
    with pytest.raises(ContractError):
        mre([], [], SpacingModel.pixel())
    with pytest.raises(ContractError):
        sdr([], [], SpacingModel.pixel(), [1])


@pytest.mark.parametrize("model", [SpacingModel.pixel(), SpacingModel.fixed(0.1), SpacingModel.wrist()])
def test_matches_scalar_oracle(model):
    rng = np.random.default_rng(7)
    K = 37
    truth = rng.uniform(0, 2000, (50, K, 2))
    pred = truth + rng.normal(0, 15, truth.shape)
    T, P = sets(truth), sets(pred)
    factors = [spacing_factor(t, model) for t in T]
    assert mre(P, T, model) == pytest.approx(mre_loop(pred.tolist(), truth.tolist(), factors), rel=1e-9)
    ts = [0.5, 1, 2, 4, 10]
    got = sdr(P, T, model, ts)
    for t in ts:
        assert got[float(t)] == sdr_loop(pred.tolist(), truth.tolist(), factors, t)


@given(seed=st.integers(0, 10_000), c=st.floats(0.01, 10))
def test_unit_conversion_linear(seed, c):
    rng = np.random.default_rng(seed)
    truth = rng.uniform(0, 500, (3, 4, 2))
    pred = truth + rng.normal(0, 5, truth.shape)
    base = mre(sets(pred), sets(truth), SpacingModel.pixel())
    assert mre(sets(pred), sets(truth), SpacingModel.fixed(c)) == pytest.approx(c * base, rel=1e-12)


@given(seed=st.integers(0, 10_000), ts=st.lists(st.floats(0.01, 50), min_size=2, max_size=6))
def test_sdr_monotone_and_bounded(seed, ts):
    rng = np.random.default_rng(seed)
    truth = rng.uniform(0, 100, (2, 5, 2))
    pred = truth + rng.normal(0, 5, truth.shape)
    out = sdr(sets(pred), sets(truth), SpacingModel.pixel(), sorted(ts))
    vals = [out[float(t)] for t in sorted(ts)]
    assert all(0 <= v <= 100 for v in vals)
    assert vals == sorted(vals)


def test_mre_zero_iff_exact():
    rng = np.random.default_rng(0)
    truth = rng.uniform(0, 100, (2, 3, 2))
    assert mre(sets(truth), sets(truth), SpacingModel.pixel()) == 0
    moved = truth.copy()
    moved[1, 2, 0] += 1e-6
    assert mre(sets(moved), sets(truth), SpacingModel.pixel()) > 0


def test_aggregate_population_std():
    reps = [MetricsReport(m, {2.0: s}, "mm", 1, 1) for m, s in [(1.0, 90.0), (2.0, 100.0), (3.0, 95.0)]]
    agg = MetricsReport.aggregate(reps)
    assert agg.mre == 2.0
    assert agg.mre_std == pytest.approx(np.sqrt(2 / 3))
    assert agg.sdr[2.0] == 95.0
    same = MetricsReport.aggregate([MetricsReport(0.5, {2.0: 99.0}, "mm", 1, 1)] * 5)
    assert same.mre_std == 0 and same.sdr_std[2.0] == 0


def test_report_round_trip():
    r = MetricsReport(0.5, {2.0: 97.0, 2.5: 98.0}, "mm", 10, 370, mre_std=0.1, sdr_std={2.0: 1.0, 2.5: 0.5})
    d = r.to_dict()
    assert d["sdr"] == {"2mm": 97.0, "2.5mm": 98.0}
    back = MetricsReport.from_dict(d)
    assert back.sdr == r.sdr and back.mre_std == 0.1 and back.sdr_std == r.sdr_std
