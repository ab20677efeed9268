import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eaas.gaussian_core import (
    ChannelEnv, DomainError, Gain, NonPhysicalStateError, TwoModeState, chernoff_overlap,
    min_signal_gain, nulling_gain, opa_apply, qcb, return_state, squeeze_state,
    symplectic_eigenvalues, tmsv_state, williamson,
)

unit = st.floats(0.0, 1.0)
photons = st.floats(0.0, 5.0)


def test_tmsv_standard_form():
    st_ = tmsv_state(1.0)
    assert (st_.e, st_.s) == (3.0, 3.0)
    assert st_.c == pytest.approx(2.0 * math.sqrt(2.0))
    assert symplectic_eigenvalues(st_) == pytest.approx([1.0, 1.0])


def test_unphysical_state_rejected():
    with pytest.raises(NonPhysicalStateError):
        TwoModeState(1.0, 1.0, 0.5)


def test_domain_errors():
    with pytest.raises(DomainError):
        return_state(1.0, 1.2)
    with pytest.raises(DomainError):
        return_state(-1.0, 0.5)
    with pytest.raises(DomainError):
        Gain(0.5)


@settings(max_examples=200, deadline=None)
@given(photons, unit, st.floats(0.0, 2.0), unit, st.floats(1.0, 6.0))
def test_opa_output_physical_and_matches_symplectic_route(n_s, kappa, n_b, kappa_i, g):
    env = ChannelEnv(n_b, kappa_i)
    out = opa_apply(n_s, kappa, env, Gain(g))
    nu = symplectic_eigenvalues(out)
    assert nu[0] >= 1.0 - 1e-9
    ref = squeeze_state(return_state(n_s, kappa, env), g)
    assert out.e == pytest.approx(ref.e, rel=1e-9, abs=1e-9)
    assert out.s == pytest.approx(ref.s, rel=1e-9, abs=1e-9)
    assert out.c == pytest.approx(ref.c, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(0.01, 1.0))
def test_nulling_gain_maps_background_signal_to_vacuum(n_s, kappa_b):
    out = opa_apply(n_s, kappa_b, ChannelEnv(), nulling_gain(n_s, kappa_b))
    assert out.e == pytest.approx(1.0, abs=1e-9)
    assert out.c == pytest.approx(0.0, abs=1e-7)


def test_nulled_state_example():
    out = opa_apply(1.0, 0.95, ChannelEnv(), nulling_gain(1.0, 0.95))
    assert (out.e, out.s) == pytest.approx((1.0, 1.1))


@settings(max_examples=100, deadline=None)
@given(photons, unit, st.floats(0.0, 1.0), unit)
def test_williamson_reconstructs_covariance(n_s, kappa, n_b, kappa_i):
    state = return_state(n_s, kappa, ChannelEnv(n_b, kappa_i))
    nu_s, nu_i, r = williamson(state)
    ch, sh = math.cosh(2 * r), math.sinh(2 * r)
    # two-mode squeezer acting on thermal modes nu_s, nu_i
    e = nu_s * (ch + 1) / 2 + nu_i * (ch - 1) / 2
    s = nu_i * (ch + 1) / 2 + nu_s * (ch - 1) / 2
    c = (nu_s + nu_i) * sh / 2
    assert (e, s, c) == pytest.approx((state.e, state.s, state.c), rel=1e-9, abs=1e-9)


def test_min_signal_gain_below_nulling_gain_with_idler_loss():
    g = min_signal_gain(1.0, 0.95, ChannelEnv(0.0, 0.8))
    assert 1.0 <= g.g < nulling_gain(1.0, 0.95).g


@pytest.mark.parametrize("n_s,kappa_t,key", [
    (1.0, 0.75, "qcb_overlap_ns1_kt075"),
    (1.0, 0.5, "qcb_overlap_ns1_kt05"),
    (0.1, 0.9, "qcb_overlap_ns01_kt09"),
])
def test_chernoff_pure_background_equals_overlap(frozen, n_s, kappa_t, key):
    q, _ = chernoff_overlap(return_state(n_s, kappa_t), return_state(n_s, 1.0))
    assert q == pytest.approx(frozen[key], abs=1e-9)
    assert qcb(return_state(n_s, kappa_t), return_state(n_s, 1.0), 3) == pytest.approx(
        0.5 * frozen[key] ** 3, rel=1e-8)


def test_chernoff_identical_states_is_one():
    st_ = return_state(1.0, 0.8, ChannelEnv(0.3, 0.9))
    q, _ = chernoff_overlap(st_, st_)
    assert q == pytest.approx(1.0, abs=1e-9)


def test_chernoff_symmetric_in_arguments():
    a = return_state(1.0, 0.8, ChannelEnv(0.3, 0.9))
    b = return_state(1.0, 0.6, ChannelEnv(0.3, 0.9))
    assert chernoff_overlap(a, b)[0] == pytest.approx(chernoff_overlap(b, a)[0], abs=1e-9)
