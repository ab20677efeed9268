import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eaas.gaussian_core import ChannelEnv, Gain, TwoModeState, opa_apply, return_state, tmsv_state
from eaas.photon_stats import (
    CASE1_X, CASE1_Y, CASE2, GENERIC, THERMAL_PRODUCT, TMSV, TruncationError, classify,
    fock_oracle, joint_pmf_eval, joint_pmf_logeval, joint_pmf_sample, joint_pmf_table, thermal_pmf,
)


def physical_states():
    # post-OPA states cover every regime the simulator produces
    return st.builds(
        lambda n_s, k, n_b, k_i, g: opa_apply(n_s, k, ChannelEnv(n_b, k_i), Gain(g)),
        st.floats(0.0, 3.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0),
        st.floats(1.0, 4.0),
    )


def test_vacuum():
    vac = TwoModeState(1.0, 1.0, 0.0)
    assert joint_pmf_eval(vac, 0, 0) == 1.0
    assert joint_pmf_eval(vac, 1, 0) == 0.0
    pmf = joint_pmf_table(vac)
    assert pmf.n_max == 0 and pmf.table.tolist() == [[1.0]]
    rng = np.random.default_rng(0)
    n_s, n_i = joint_pmf_sample(pmf, rng, 100)
    assert not n_s.any() and not n_i.any()


def test_tmsv_values():
    st_ = tmsv_state(1.0)
    assert classify(st_) == TMSV
    assert joint_pmf_eval(st_, 0, 0) == pytest.approx(0.5)
    assert joint_pmf_eval(st_, 1, 1) == pytest.approx(0.25)
    assert joint_pmf_eval(st_, 0, 1) == 0.0
    # geometric tail 2^-(n+1) below 1e-10 needs about 34 levels
    assert joint_pmf_table(st_, 1e-10).n_max in range(33, 37)


def test_thermal_signal_example():
    st_ = TwoModeState(3.0, 1.0, 0.0)
    assert joint_pmf_eval(st_, 2, 0) == pytest.approx(0.125)
    assert joint_pmf_eval(st_, 2, 1) == 0.0


def test_regime_classification():
    assert classify(return_state(1.0, 0.7)) in (CASE1_X, CASE1_Y)
    assert classify(TwoModeState(2.0, 3.0, 0.0)) == THERMAL_PRODUCT
    assert classify(TwoModeState(2.5, 3.0, 2.2)) == GENERIC
    # C = sqrt(6) puts (2.5, 3) exactly on the X = 0 boundary
    assert classify(TwoModeState(2.5, 3.0, math.sqrt(6.0))) in (CASE1_X, CASE1_Y)


def test_case2_state_matches_oracle():
    # z = 1 exactly when E + S - E S + C^2 = 1: pick E, S and solve for C
    e, s = 2.0, 3.0
    c = math.sqrt(1.0 - e - s + e * s)
    st_ = TwoModeState(e, s, c)
    assert classify(st_) in (CASE2, TMSV, CASE1_X, CASE1_Y)
    ref = fock_oracle(st_, 40)
    n = np.arange(41)
    assert np.max(np.abs(joint_pmf_eval(st_, n[:, None], n[None, :]) - ref)) < 1e-8


@pytest.mark.parametrize("c", [2.2, math.sqrt(6.0)])
def test_examples_against_oracle(c):
    st_ = TwoModeState(2.5, 3.0, c)
    n = np.arange(41)
    ref = fock_oracle(st_, 40)
    assert np.max(np.abs(joint_pmf_eval(st_, n[:, None], n[None, :]) - ref)) < 1e-10


@settings(max_examples=50, deadline=None)
@given(physical_states())
def test_table_normalisation_and_marginals(state):
    pmf = joint_pmf_table(state, 1e-10)
    assert pmf.table.min() >= 0.0
    assert pmf.table.sum() + pmf.tail_mass == pytest.approx(1.0, abs=1e-12)
    assert pmf.table.sum() >= 1.0 - 1e-8
    half = pmf.n_max // 2 + 1
    ms = thermal_pmf((state.e - 1.0) / 2.0, pmf.n_max)
    mi = thermal_pmf((state.s - 1.0) / 2.0, pmf.n_max)
    assert np.max(np.abs(pmf.table.sum(axis=1)[:half] - ms[:half])) < 1e-8
    assert np.max(np.abs(pmf.table.sum(axis=0)[:half] - mi[:half])) < 1e-8


@settings(max_examples=50, deadline=None)
@given(physical_states(), st.integers(0, 12), st.integers(0, 12))
def test_exchange_symmetry(state, a, b):
    swapped = state.swapped()
    assert joint_pmf_eval(state, a, b) == pytest.approx(joint_pmf_eval(swapped, b, a), abs=1e-12)


def test_limit_continuity_in_c():
    base = TwoModeState(2.0, 3.0, 0.0)
    near = TwoModeState(2.0, 3.0, 1e-5)
    n = np.arange(8)
    p0 = joint_pmf_eval(base, n[:, None], n[None, :])
    p1 = joint_pmf_eval(near, n[:, None], n[None, :])
    assert np.max(np.abs(p1 - p0) / p0) <= 1e-6


def test_logeval_consistent():
    st_ = return_state(1.0, 0.6, ChannelEnv(0.2, 0.9))
    assert math.exp(joint_pmf_logeval(st_, 3, 5)) == pytest.approx(joint_pmf_eval(st_, 3, 5), rel=1e-12)


def test_sampling_tmsv_vacuum_frequency():
    pmf = joint_pmf_table(tmsv_state(1.0))
    n_s, n_i = joint_pmf_sample(pmf, np.random.default_rng(12345), 1_000_000)
    p00 = np.mean((n_s == 0) & (n_i == 0))
    assert abs(p00 - 0.5) <= 3 * math.sqrt(0.25 / 1e6)
    again = joint_pmf_sample(pmf, np.random.default_rng(12345), 1000)
    assert np.array_equal(again[0], n_s[:1000]) and np.array_equal(again[1], n_i[:1000])


def test_table_cap():
    with pytest.raises(TruncationError):
        joint_pmf_table(return_state(200.0, 1.0), max_levels=64)


def test_fock_oracle_truncation_error():
    with pytest.raises(TruncationError):
        fock_oracle(return_state(50.0, 1.0), 5, pad=10)
