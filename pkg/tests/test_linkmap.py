import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from amclab.linkmap import (
    NO_TRANSMISSION,
    BlerModel,
    CqiTable,
    CqiThresholds,
    LinkConfig,
    McsEntry,
    bler,
    calibrate_thresholds,
    cqi_to_mcs,
    eesm,
    sinr_to_cqi,
    throughput,
)

from oracles import brute_force_cqi, eesm_direct

MODEL = BlerModel.default()


def test_eesm_equal_inputs_fixed_point():
    assert eesm([0.25, 0.25, 0.25], 2.0) == pytest.approx(0.25, abs=1e-15)


def test_eesm_two_values_matches_direct_evaluation():
    expected = -math.log((math.exp(-1) + math.exp(-2)) / 2)
    assert eesm([1.0, 2.0], 1.0) == pytest.approx(expected, rel=1e-12)
    assert eesm([1.0, 2.0], 1.0) == pytest.approx(1.3799, abs=1e-4)


@given(st.floats(1e-6, 1e6), st.floats(1e-3, 1e3))
def test_eesm_single_element(x, beta):
    assert eesm([x], beta) == pytest.approx(x, rel=1e-12)


def test_eesm_extreme_ratios_do_not_overflow():
    v = eesm([1e-3, 1e6], 0.01)
    assert np.isfinite(v) and 1e-3 <= v <= 1e6
    assert eesm([1e5, 1e6], 1.0) == pytest.approx(1e5 + math.log(2), rel=1e-12)


def test_eesm_errors():
    with pytest.raises(ValueError):
        eesm([], 1.0)
    with pytest.raises(ValueError):
        eesm([1.0], 0.0)
    with pytest.raises(ValueError):
        eesm([-1.0, 2.0], 1.0)


@given(
    arrays(np.float64, st.integers(1, 20), elements=st.floats(1e-4, 1e4)),
    st.floats(0.05, 50.0),
)
def test_eesm_matches_direct_formula(s, beta):
    if (s / beta).max() > 600:
        return
    assert eesm(s, beta) == pytest.approx(eesm_direct(s, beta), rel=1e-9)


def test_sinr_to_cqi_contract():
    thr = calibrate_thresholds(MODEL, 0.1)
    assert sinr_to_cqi(thr[1] - 1.0, thr) == 0
    assert sinr_to_cqi(60.0, thr) == 15
    assert sinr_to_cqi(thr[7], thr) == 7
    np.testing.assert_array_equal(sinr_to_cqi(np.array([thr[3], thr[3] - 1e-9]), thr), [3, 2])


def test_cqi_to_mcs():
    table = CqiTable.nr_256qam()
    top = cqi_to_mcs(15, table)
    assert (top.Q, top.R) == (8, 948 / 1024)
    assert cqi_to_mcs(0, table) is NO_TRANSMISSION
    se = table.spectral_efficiencies
    assert cqi_to_mcs(1, table).Q * cqi_to_mcs(1, table).R == se.min()
    with pytest.raises(ValueError):
        cqi_to_mcs(16, table)


def test_table_validation():
    entries = list(CqiTable.nr_256qam().entries)
    entries[3] = McsEntry(4, 2, 0.01)
    with pytest.raises(ValueError, match="strictly increase"):
        CqiTable(tuple(entries))
    entries = list(CqiTable.nr_256qam().entries)
    entries[0] = McsEntry(1, 3, 0.1)
    with pytest.raises(ValueError):
        CqiTable(tuple(entries))


def test_bler_examples():
    m, k = MODEL.m[4], MODEL.k[4]
    assert bler(5, m, MODEL) == pytest.approx(0.5)
    assert bler(5, m + math.log(9) / k, MODEL) == pytest.approx(0.1)
    assert bler(5, 1e6, MODEL) == 0.0
    with pytest.raises(ValueError):
        bler(0, 3.0, MODEL)


@given(st.integers(1, 15), st.floats(-15, 15), st.floats(0.01, 5))
def test_bler_strictly_decreasing(c, offset, ds):
    # offsets from the midpoint keep the curve out of its double-precision saturated tails
    s = MODEL.m[c - 1] + offset
    assert bler(c, s + ds, MODEL) < bler(c, s, MODEL)


def test_bler_model_validation():
    with pytest.raises(ValueError):
        BlerModel(tuple(range(15, 0, -1)), (2.0,) * 15)
    with pytest.raises(ValueError):
        BlerModel(tuple(range(15)), (0.0,) * 15)


def test_calibration_closed_form_examples():
    assert calibrate_thresholds(MODEL, 0.5).array == pytest.approx(MODEL.m)
    np.testing.assert_allclose(calibrate_thresholds(MODEL, 0.1).array, MODEL.m + math.log(9) / 2)
    assert math.log(9) / 2 == pytest.approx(1.0986, abs=1e-4)
    assert np.all(calibrate_thresholds(MODEL, 0.05).array > calibrate_thresholds(MODEL, 0.1).array)
    with pytest.raises(ValueError):
        calibrate_thresholds(MODEL, 1.0)


def test_thresholds_must_increase():
    with pytest.raises(ValueError):
        CqiThresholds(tuple([1.0] * 15))


def test_throughput_examples():
    assert throughput(1.0, 2, 0.5, 336, 0.5e-3) == 0
    assert throughput(0.0, 2, 0.5, 336, 0.5e-3) == pytest.approx(672_000)
    assert throughput(0.0, 0, 0.0, 336, 0.5e-3) == 0


@given(st.floats(-20, 40))
def test_illa_self_consistency_closed_form(s):
    thr = calibrate_thresholds(MODEL, 0.1)
    c = sinr_to_cqi(s, thr)
    if c:
        assert bler(c, s, MODEL) <= 0.1 + 1e-12
    if c < 15:
        assert bler(c + 1, s, MODEL) > 0.1


@given(st.floats(-20, 40))
def test_table_aware_selection_is_feasible(s):
    cfg = LinkConfig()
    c = sinr_to_cqi(s, cfg.thresholds)
    if c:
        assert bler(c, s, MODEL) <= 0.1 + 1e-12


def test_table_aware_selection_equals_brute_force_on_grid():
    cfg = LinkConfig()
    grid = np.round(np.arange(-150, 351) * 0.1, 10)
    got = sinr_to_cqi(grid, cfg.thresholds)
    want = [brute_force_cqi(float(s), list(MODEL.m), list(MODEL.k), 0.1) for s in grid]
    np.testing.assert_array_equal(got, want)


def test_link_config_per_cqi_beta():
    cfg = LinkConfig(beta=tuple(np.linspace(1, 3, 15)))
    s = np.full((2, 48), 10.0)
    np.testing.assert_array_equal(cfg.select_cqi(s), LinkConfig().select_cqi(s))
    with pytest.raises(ValueError):
        LinkConfig(beta=(1.0, 2.0))
