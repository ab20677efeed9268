"""Closed-form and semi-analytic error models for the benchmark receivers."""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats

from .gaussian_core import ChannelEnv, opa_apply, nulling_gain
from .special import gammainc_upper


class ContractError(ValueError):
    """A formula was asked to work outside the regime it was derived for."""


def ea_error_ideal(n_s, kappa_t, m_copies, m_slots=1, env=None):
    """Error of the nulling receiver with ideal background, idler and no noise.

    ``m_slots = 1`` is absorption detection, ``m_slots >= 2`` single-peak
    positioning among ``m_slots`` frequencies.
    """
    if env is not None and not env.ideal:
        raise ContractError("ea_error_ideal needs n_b = 0 and kappa_i = 1")
    if m_slots < 1:
        raise ValueError("m_slots must be >= 1")
    guess = 0.5 if m_slots == 1 else (m_slots - 1) / m_slots
    zero_count = (1.0 / (1.0 + n_s * (1.0 - math.sqrt(kappa_t)))) ** (2 * m_copies)
    return guess * zero_count


def bell_variance(n_s, kappa):
    """Shared variance of the two Bell-measured quadratures."""
    return 1.0 + n_s + n_s * kappa - 2.0 * math.sqrt(n_s * (1.0 + n_s) * kappa)


def bell_receiver_error(n_s, kappa_b, kappa_t, m_copies):
    """Error of the beam-splitter + dual-homodyne receiver with a chi-square test."""
    v_t = bell_variance(n_s, kappa_t)
    v_b = bell_variance(n_s, kappa_b)
    if v_t == v_b:
        return 0.5
    thr = 2.0 * m_copies * v_t * v_b * math.log(v_t / v_b) / (v_t - v_b)
    f_t = gammainc_upper(m_copies, thr / (2.0 * v_t))
    f_b = gammainc_upper(m_copies, thr / (2.0 * v_b))
    return 0.5 * (1.0 - abs(f_t - f_b))


def _gchi2_cdf(weights, dof, t):
    """CDF of ``sum_j w_j chi2(dof)`` at ``t`` by Gil-Pelaez inversion."""
    weights = np.asarray(weights, dtype=float)
    weights = weights[weights != 0.0]
    if weights.size == 0:
        return 1.0 if t >= 0 else 0.0

    def integrand(u):
        # phase and log-modulus of prod_j (1 - 2 i w_j u)^(-dof/2) e^{-i u t}
        z = 1.0 - 2j * weights * u
        log_phi = -0.5 * dof * np.sum(np.log(z))
        val = np.exp(log_phi - 1j * u * t)
        return val.imag / u

    scale = 1.0 / (2.0 * np.abs(weights).max())
    total = 0.0
    lo = 0.0
    # split the oscillatory integral into growing panels until negligible
    width = scale
    for _ in range(200):
        hi = lo + width
        part, _ = integrate.quad(integrand, lo, hi, limit=400, epsabs=1e-12, epsrel=1e-10)
        total += part
        lo = hi
        width *= 1.5
        decay = (1.0 + (2.0 * np.abs(weights).min() * lo) ** 2) ** (-0.25 * dof * weights.size)
        if decay / max(lo, 1e-300) < 1e-13:
            break
    return 0.5 - total / math.pi


def _gchi2_cdf_conditional(weights, dof, t):
    """Same CDF by conditioning on the first chi-square (two weights only)."""
    w1, w2 = (float(v) for v in weights)
    dist = stats.chi2(dof)

    def inner(u):
        x = dist.ppf(u)
        if w2 == 0.0:
            return float(w1 * x <= t)
        arg = (t - w1 * x) / w2
        return dist.cdf(arg) if w2 > 0 else dist.sf(arg)

    val, _ = integrate.quad(inner, 0.0, 1.0, limit=200, epsabs=1e-10)
    return val


def gchi2_cdf(weights, dof, t):
    """CDF of a weighted sum of independent ``chi2(dof)`` variables.

    Characteristic-function inversion; its integrand decays like
    ``u^-(dof+1)``, too slowly for ``dof <= 4``, where the two-term sums used
    here are integrated by conditioning instead.
    """
    weights = np.asarray(weights, dtype=float)
    if dof <= 4 and weights.size == 2:
        return _gchi2_cdf_conditional(weights, dof, t)
    return _gchi2_cdf(weights, dof, t)


def _homodyne_covariances(n_s, kappa_t, quadrature_pair):
    g = nulling_gain(n_s, 1.0)
    st = opa_apply(n_s, kappa_t, ChannelEnv(), g)
    if quadrature_pair == ("q", "q"):
        cov = np.array([[st.e, st.c], [st.c, st.s]])
    elif quadrature_pair == ("q", "p"):
        # q_S and p_I are uncorrelated in the standard form
        cov = np.array([[st.e, 0.0], [0.0, st.s]])
    else:
        raise ValueError("quadrature_pair must be ('q','q') or ('q','p')")
    return cov


def opa_homodyne_weights(n_s, kappa_t, quadrature_pair=("q", "q")):
    """Eigen-variances of the target covariance and the LLR weights."""
    cov = _homodyne_covariances(n_s, kappa_t, tuple(quadrature_pair))
    var_t = np.linalg.eigvalsh(cov)
    return var_t, 1.0 / var_t - 1.0


def opa_homodyne_error_ideal(n_s, kappa_t, m_copies, quadrature_pair=("q", "q")):
    """ML error of homodyne detection after the nulling OPA, background ``kappa_B = 1``.

    The background output is vacuum, so the log-likelihood ratio reduces to
    ``s = sum_L a x'^2 + b y'^2`` in the eigenbasis of the target covariance.
    Under each hypothesis ``s`` is a generalized chi-square; deciding
    "background" when ``s > -M log(det)`` gives the error
    ``(P(s <= thr | B) + P(s > thr | T)) / 2``, which equals half the overlap
    integral of the two densities.
    """
    var_t, w = opa_homodyne_weights(n_s, kappa_t, quadrature_pair)
    if np.allclose(var_t, 1.0):
        return 0.5
    thr = -m_copies * float(np.sum(np.log(var_t)))
    miss_b = gchi2_cdf(w, m_copies, thr)
    miss_t = 1.0 - gchi2_cdf(w * var_t, m_copies, thr)
    return float(np.clip(0.5 * (miss_b + miss_t), 0.0, 0.5))


def nuller_miss_probability(kappa_b, kappa_t, n_s, m_copies):
    """False-negative probability of a nulled coherent-state return."""
    return math.exp(-m_copies * n_s * (math.sqrt(kappa_b) - math.sqrt(kappa_t)) ** 2)


def classical_unconditional_nuller(m, kappa_b, kappa_t, n_s, m_copies):
    p = nuller_miss_probability(kappa_b, kappa_t, n_s, m_copies)
    return (m - 1) / m * p


def classical_conditional_nuller(m, kappa_b, kappa_t, n_s, m_copies):
    p = nuller_miss_probability(kappa_b, kappa_t, n_s, m_copies)
    return conditional_nuller_from_p(m, p)


def conditional_nuller_from_p(m, p):
    # expm1/log1p keep ((1-p)^m + m p - 1) accurate when p is tiny
    return (math.expm1(m * math.log1p(-p)) + m * p) / m if p < 1 else (m - 1) / m


def unconditional_nuller_from_p(m, p):
    return (m - 1) / m * p


def classical_homodyne_error(patterns, allocation, n_b=0.0, trials=100_000, seed=0):
    """ML error of q-homodyne on coherent probes, by Monte Carlo.

    Slot ``l`` carries ``allocation[l]`` photons in total over the M copies;
    averaging the copies leaves one Gaussian per slot with mean
    ``2 sqrt(X_l kappa_l)`` and variance ``1 + 2 n_b`` (rescaled by ``sqrt M``).
    ML is then nearest-mean. Returns ``(p_hat, stderr)``.
    """
    kappa = np.asarray(patterns, dtype=float)
    x = np.asarray(allocation, dtype=float)
    h, m = kappa.shape
    means = 2.0 * np.sqrt(kappa * x[None, :])
    sd = math.sqrt(1.0 + 2.0 * n_b)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 7])))
    errors = 0
    done = 0
    while done < trials:
        n = min(65_536, trials - done)
        true_h = rng.integers(0, h, size=n)
        y = means[true_h] + sd * rng.standard_normal((n, m))
        d2 = ((y[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        errors += int(np.count_nonzero(d2.argmin(axis=1) != true_h))
        done += n
    p = errors / trials
    return p, math.sqrt(p * (1.0 - p) / trials)
