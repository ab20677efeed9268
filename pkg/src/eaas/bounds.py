"""Lower bounds on the error of any classical (coherent-state mixture) probe.

Thermal-loss channels ``(kappa, N_B)`` enter as phase-insensitive channels
with ``mu = kappa`` and output noise ``E = N_B``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .projections import project_capped_simplex


@dataclass(frozen=True)
class PhaseInsensitiveChannel:
    mu: float
    e_noise: float = 0.0

    def __post_init__(self):
        if self.mu < 0 or self.e_noise < 0:
            raise ValueError("mu and e_noise must be non-negative")

    @classmethod
    def thermal_loss(cls, kappa, n_b=0.0):
        if not 0.0 <= kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {kappa!r}")
        return cls(float(kappa), float(n_b))


@dataclass(frozen=True)
class EnergyAllocation:
    """Mean photon number per slot, totalled over the M probes."""

    x: np.ndarray
    budget: float

    def __post_init__(self):
        if np.any(self.x < 0) or self.x.sum() > self.budget + 1e-9:
            raise ValueError("allocation violates x >= 0, sum(x) <= budget")


@dataclass(frozen=True)
class GeneralBound:
    probability: float
    allocation: EnergyAllocation
    degenerate: bool = False
    iterations: int = 0


def _amplitude_gap(a, b):
    return (math.sqrt(a) - math.sqrt(b)) ** 2


def binom(n, k):
    """Binomial coefficient: exact integers up to n = 60, log-gamma beyond."""
    if k < 0 or k > n:
        return 0
    if n <= 60:
        return math.comb(n, k)
    return math.exp(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def kpeak_weight(m, k):
    """``w_{m,k} = k C(m-1, k) / (C(m, k) - 1)``."""
    if not 1 <= k < m:
        raise ValueError("need 1 <= k < m")
    h = binom(m, k)
    return k * binom(m - 1, k) / (h - 1)


def helstrom_binary_lb(kappa_b, kappa_t, n_s, m_copies, n_b=0.0):
    """Helstrom error for two coherent-state returns (also the Dolinar error)."""
    nu_b = 1.0 / (1.0 + 2.0 * n_b)
    arg = math.exp(-nu_b * m_copies * n_s * _amplitude_gap(kappa_b, kappa_t))
    return 0.5 * (1.0 - math.sqrt(1.0 - arg))


# the Dolinar receiver attains the Helstrom limit for this problem
dolinar_error = helstrom_binary_lb


def _passive_factor(e_a, e_b):
    return 1.0 / (1.0 + (math.sqrt(e_a * (1.0 + e_b)) - math.sqrt(e_b * (1.0 + e_a))) ** 2)


def kpeak_lb(m, k, kappa_b, kappa_t, n_s, m_copies, n_b=0.0):
    h = binom(m, k)
    w = kpeak_weight(m, k)
    expo = 2.0 * w * m_copies * n_s * _amplitude_gap(kappa_b, kappa_t) / (1.0 + 2.0 * n_b)
    # passive-signature factor c^(2Mw) is 1 for equal noise on both channels
    c = _passive_factor(n_b, n_b) ** (2.0 * m_copies * w)
    return (h - 1) / (2.0 * h) * c * math.exp(-expo)


def gaussian_fidelity_kernel(ch_a, ch_b, x_energy, m_copies=1):
    """Fidelity between the two channel outputs for ``x_energy`` input photons."""
    if x_energy < 0:
        raise ValueError("x_energy must be non-negative")
    b = _amplitude_gap(ch_a.mu, ch_b.mu) / (1.0 + ch_a.e_noise + ch_b.e_noise)
    c = _passive_factor(ch_a.e_noise, ch_b.e_noise)
    return c ** (m_copies / 2.0) * math.exp(-0.5 * b * x_energy)


def _pair_constants(patterns, m_copies, n_b):
    """Per-pair exponents ``B[p, l]`` and log prefactors ``log C[p]``."""
    kappa = np.asarray(patterns, dtype=float)
    h, m = kappa.shape
    pairs = list(itertools.combinations(range(h), 2))
    root = np.sqrt(kappa)
    b = np.array([(root[i] - root[j]) ** 2 for i, j in pairs]) / (1.0 + 2.0 * n_b)
    # equal noise on every channel: every c_l = 1
    log_c = np.full(len(pairs), m * (m_copies / 2.0) * math.log(_passive_factor(n_b, n_b)))
    return b, log_c


def _check_patterns(patterns):
    kappa = np.asarray(patterns, dtype=float)
    if kappa.ndim != 2 or kappa.shape[0] < 2:
        raise ValueError("need an H x m pattern matrix with H >= 2")
    if np.any(kappa < 0) or np.any(kappa > 1):
        raise ValueError("transmissivities must lie in [0, 1]")
    return kappa


def _log_objective(x, b, log_c):
    # log of sum_p C_p exp(-B_p.x / 2); the 1/K factor is applied by the caller
    z = log_c - 0.5 * b @ x
    val = logsumexp(z)
    w = np.exp(z - val)
    return val, -0.5 * (w @ b)


def general_lb(patterns, n_s, m_copies, n_b=0.0, tol=1e-10, max_iter=100_000):
    """Fidelity lower bound with the energy allocation optimised.

    Minimises ``f(X) = (1/K) sum_{h<h'} C exp(-1/2 sum_l B_l X_l)`` over
    ``X >= 0, sum X <= m M N_S`` by projected gradient descent with
    backtracking on ``log f`` (same minimiser, better conditioned), and
    returns ``(K/H^2) f*^2``.
    """
    kappa = _check_patterns(patterns)
    h, m = kappa.shape
    k = h * (h - 1) / 2.0
    budget = m * m_copies * n_s
    b, log_c = _pair_constants(kappa, m_copies, n_b)
    x = np.full(m, budget / m)

    if not np.any(b > 0):
        val = k / h ** 2 * math.exp(2.0 * logsumexp(log_c) - 2.0 * math.log(len(b)))
        return GeneralBound(val, EnergyAllocation(x, budget), degenerate=True)

    f, g = _log_objective(x, b, log_c)
    step = 1.0 / max(np.abs(b).max() ** 2, 1e-300)
    it = 0
    for it in range(1, max_iter + 1):
        while True:
            cand = project_capped_simplex(x - step * g, budget)
            f_new, g_new = _log_objective(cand, b, log_c)
            d = cand - x
            if f_new <= f + g @ d + 0.5 / step * (d @ d) + 1e-15:
                break
            step *= 0.5
            if step < 1e-300:
                break
        moved = abs(f - f_new)
        x, f, g = cand, f_new, g_new
        step *= 2.0
        if moved < tol * 1e-2:
            break
    fstar = math.exp(f) / k
    return GeneralBound(k / h ** 2 * fstar ** 2, EnergyAllocation(x, budget), iterations=it)


def general_lb_closed(patterns, n_s, m_copies, n_b=0.0):
    """Looser closed form ``((H-1)/2H) cbar^2 exp(-B* m M N_S)``."""
    kappa = _check_patterns(patterns)
    h, m = kappa.shape
    k = h * (h - 1) / 2.0
    b, log_c = _pair_constants(kappa, m_copies, n_b)
    b_star = (b.sum(axis=0) / k).max()
    log_cbar = log_c.sum() / k
    return (h - 1) / (2.0 * h) * math.exp(2.0 * log_cbar - b_star * m * m_copies * n_s)


def objective_at(patterns, allocation, m_copies, n_b=0.0):
    """``(K/H^2) f(X)^2`` at a given allocation (no minimisation)."""
    kappa = _check_patterns(patterns)
    h = kappa.shape[0]
    k = h * (h - 1) / 2.0
    b, log_c = _pair_constants(kappa, m_copies, n_b)
    f, _ = _log_objective(np.asarray(allocation, dtype=float), b, log_c)
    return k / h ** 2 * (math.exp(f) / k) ** 2
