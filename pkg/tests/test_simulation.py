import math

import numpy as np
import pytest
from scipy import stats

from eaas.gaussian_core import ChannelEnv, nulling_gain
from eaas.receivers import ea_error_ideal
from eaas.simulation import (
    _decide, ExperimentConfig, TransmissivityPattern, conditional_logpmf_tables, estimate_error,
    ml_decide, sample_trial, tally_blocks, trial_loglik_histogram, trial_loglik_naive,
)
from eaas.spectra_io import builtin_pattern, kpeak_patterns


def detection(kappa_t=0.75, kappa_b=1.0, m_copies=10, n_s=1.0, env=ChannelEnv()):
    pat = TransmissivityPattern(np.array([[kappa_b], [kappa_t]]))
    return ExperimentConfig(pat, env, n_s, nulling_gain(n_s, kappa_b).g, m_copies)


def test_config_validation():
    pat = builtin_pattern("wine")
    with pytest.raises(ValueError):
        ExperimentConfig(pat, n_s_per_slot=[1.0, 1.0])
    with pytest.raises(ValueError):
        ExperimentConfig(pat, gains=0.5)
    with pytest.raises(ValueError):
        ExperimentConfig(pat, priors=[0.5, 0.5, 0.5])


def test_table_deduplication():
    assert sum(t.log_tables.shape[0] for t in conditional_logpmf_tables(detection())) == 2
    cfg = ExperimentConfig(kpeak_patterns(100, 1, 0.75, 1.0), m_copies=2)
    tabs = conditional_logpmf_tables(cfg)
    distinct = {(round(st.e, 12), round(st.s, 12), round(st.c, 12)) for t in tabs for st in t.states}
    assert len(distinct) == 2
    wine = conditional_logpmf_tables(ExperimentConfig(builtin_pattern("wine")))
    assert sum(t.log_tables.shape[0] for t in wine) == 12


def test_vacuum_source_gives_zero_counts():
    cfg = ExperimentConfig(builtin_pattern("drug"), n_s_per_slot=0.0, m_copies=5)
    counts = sample_trial(cfg, 1, np.random.default_rng(0))
    assert counts.shape == (4, 5, 2) and not counts.any()


def test_sample_trial_deterministic():
    cfg = ExperimentConfig(builtin_pattern("wine"), m_copies=7)
    a = sample_trial(cfg, 2, np.random.default_rng(99))
    b = sample_trial(cfg, 2, np.random.default_rng(99))
    assert np.array_equal(a, b)


def test_sample_trial_goodness_of_fit():
    cfg = ExperimentConfig(TransmissivityPattern(np.array([[0.9], [0.6]])), ChannelEnv(0.1, 0.9),
                           1.0, 1.3, 1)
    tabs = conditional_logpmf_tables(cfg)
    rng = np.random.default_rng(5)
    n = 100_000
    draws = np.array([sample_trial(cfg, 1, rng, tabs)[0, 0] for _ in range(n)])
    probs = np.exp(tabs[0].log_tables[tabs[0].index[1]])
    flat = draws[:, 0] * probs.shape[1] + draws[:, 1]
    observed = np.bincount(flat, minlength=probs.size)
    expected = probs.ravel() * n
    # pool sparse cells so every expected count is at least 5
    order = np.argsort(expected)[::-1]
    keep = order[expected[order] >= 5]
    rest = np.setdiff1d(np.arange(probs.size), keep)
    obs = np.append(observed[keep], observed[rest].sum())
    exp = np.append(expected[keep], expected[rest].sum())
    exp *= obs.sum() / exp.sum()
    _, pval = stats.chisquare(obs, exp)
    assert pval > 0.001


def test_ml_decide_identical_hypotheses_uniform():
    cfg = ExperimentConfig(TransmissivityPattern(np.full((3, 1), 0.8)), m_copies=2)
    tabs = conditional_logpmf_tables(cfg)
    rng = np.random.default_rng(1)
    picks = [ml_decide(sample_trial(cfg, 0, rng, tabs), tabs, cfg.priors, rng) for _ in range(3000)]
    freq = np.bincount(picks, minlength=3) / 3000
    assert np.all(np.abs(freq - 1 / 3) < 0.04)


def test_ml_decide_null_and_count_rule():
    cfg = detection()
    tabs = conditional_logpmf_tables(cfg)
    rng = np.random.default_rng(0)
    zeros = np.zeros((1, 10, 2), dtype=int)
    assert ml_decide(zeros, tabs, cfg.priors, rng) == 0
    one_click = zeros.copy()
    one_click[0, 3] = (1, 2)
    assert ml_decide(one_click, tabs, cfg.priors, rng) == 1
    # counts far outside the tabulated support are evaluated on demand
    far = zeros.copy()
    far[0, 0] = (500, 400)
    ll, imp = trial_loglik_naive(far, tabs)
    assert imp[0] == 1 and np.isfinite(ll[1])


def test_all_impossible_is_flagged():
    # both hypotheses null to vacuum on the signal; a signal click with no idler click is impossible
    pat = TransmissivityPattern(np.array([[1.0], [1.0]]))
    cfg = ExperimentConfig(pat, ChannelEnv(), 1.0, nulling_gain(1.0, 1.0).g, 1)
    tabs = conditional_logpmf_tables(cfg)
    counts = np.array([[[3, 0]]])
    dec, flagged = ml_decide(counts, tabs, cfg.priors, np.random.default_rng(0), return_flag=True)
    assert flagged and dec in (0, 1)


def test_histogram_and_naive_decisions_identical():
    cfg = ExperimentConfig(builtin_pattern("wine"), ChannelEnv(0.05, 0.9), 1.0, 1.5, 12)
    tabs = conditional_logpmf_tables(cfg)
    rng = np.random.default_rng(8)
    for _ in range(300):
        h = int(rng.integers(3))
        counts = sample_trial(cfg, h, rng, tabs)
        ll_n, imp_n = trial_loglik_naive(counts, tabs)
        ll_h, imp_h = trial_loglik_histogram(counts, tabs)
        assert np.array_equal(imp_n, imp_h)
        assert ll_h == pytest.approx(ll_n, rel=1e-12, abs=1e-12)
        seed = int(rng.integers(2 ** 32))
        d_n = _decide(ll_n[None], imp_n[None], np.log(cfg.priors), np.random.default_rng(seed))
        d_h = _decide(ll_h[None], imp_h[None], np.log(cfg.priors), np.random.default_rng(seed))
        assert d_n[0][0] == d_h[0][0]


def test_vectorised_engine_matches_naive_loop():
    cfg = ExperimentConfig(builtin_pattern("drug"), ChannelEnv(0.1, 1.0), 1.0, 1.4, 6)
    fast = estimate_error(cfg, 20_000, seed=3)
    tabs = conditional_logpmf_tables(cfg)
    rng = np.random.default_rng(3)
    n = 4000
    errors = 0
    for _ in range(n):
        h = int(rng.integers(3))
        errors += ml_decide(sample_trial(cfg, h, rng, tabs), tabs, cfg.priors, rng) != h
    slow = errors / n
    assert abs(fast.p_hat - slow) < 3 * math.hypot(fast.stderr, math.sqrt(slow * (1 - slow) / n))


def test_reproducible_and_thread_independent():
    cfg = ExperimentConfig(kpeak_patterns(10, 1, 0.75, 1.0), ChannelEnv(), 1.0,
                           nulling_gain(1.0, 1.0).g, 5)
    a = estimate_error(cfg, 30_000, seed=17)
    b = estimate_error(cfg, 30_000, seed=17, threads=3)
    assert a == b
    assert estimate_error(cfg, 30_000, seed=18) != a


def test_block_tallies_add_up():
    cfg = detection(m_copies=4)
    whole = tally_blocks(cfg, 50_000, 9)
    parts = [tally_blocks(cfg, 50_000, 9, first=f, count=2) for f in range(0, 7, 2)]
    assert whole == tuple(map(sum, zip(*parts)))


def test_fixed_true_hypothesis():
    cfg = detection()
    est = estimate_error(cfg, 20_000, seed=1, true_h_mode=0)
    assert est.p_hat == 0.0  # background nulls to vacuum: never a click
    with pytest.raises(ValueError):
        estimate_error(cfg, 10, true_h_mode=5)


def test_identical_hypotheses_error_two_thirds():
    cfg = ExperimentConfig(TransmissivityPattern(np.full((3, 2), 0.7)), m_copies=3)
    est = estimate_error(cfg, 60_000, seed=2)
    assert abs(est.p_hat - 2 / 3) < 3 * est.stderr


@pytest.mark.parametrize("m_copies,kappa_t", [(1, 0.5), (5, 0.75), (10, 0.9), (20, 0.6), (3, 0.3)])
def test_calibration_against_closed_form(m_copies, kappa_t):
    est = estimate_error(detection(kappa_t, m_copies=m_copies), 100_000, seed=m_copies)
    assert abs(est.p_hat - ea_error_ideal(1.0, kappa_t, m_copies)) < 3 * est.stderr


def test_error_bounded_by_random_guess():
    cfg = ExperimentConfig(builtin_pattern("wine"), ChannelEnv(0.5, 0.5), 1.0, 1.0, 2)
    est = estimate_error(cfg, 30_000, seed=4)
    assert est.p_hat <= 2 / 3 + 3 * est.stderr
