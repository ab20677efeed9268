"""Joint photon-number distribution of a standard-form two-mode state.

The closed form involves ``2F1(1+n_S, 1+n_I; 1; z)`` with ``z = 4C^2/(XY)``.
Euler's transformation turns it into a terminating polynomial, and since
``XY - 4C^2 = (C^2 + E + S - ES - 1)(C^2 - (E+1)(S+1))`` the whole expression
collapses to a finite sum of non-negative terms::

    P(a, b) = (4/A) sum_k binom(a,k) binom(b,k) (4C^2)^k x^(b-k) y^(a-k) / A^(a+b)

with ``A = (E+1)(S+1) - C^2``, ``x = -X = (E+1)(S-1) - C^2`` and
``y = -Y = (E-1)(S+1) - C^2``, all non-negative for physical states.
The limiting regimes (X or Y -> 0, C -> 0, z -> 1, pure TMSV) still get
their own reduced expressions; the generic sum is regular there too, which
is what the continuity tests rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .gaussian_core import TwoModeState, williamson

DEFAULT_TAIL = 1e-10
MAX_NMAX = 4096

# regime labels
GENERIC = "generic"
CASE1_X = "case1_x"          # X -> 0, signal/idler correlated, n_S >= n_I
CASE1_Y = "case1_y"          # Y -> 0, n_I >= n_S
THERMAL_X = "thermal_signal"  # X -> 0 and C -> 0: idler in vacuum
THERMAL_Y = "thermal_idler"   # Y -> 0 and C -> 0: signal in vacuum
THERMAL_PRODUCT = "thermal_product"
CASE2 = "case2"              # z -> 1
TMSV = "tmsv"


class TruncationError(RuntimeError):
    """Raised when a table would need more than the allowed number of levels."""


def _coefficients(state):
    e, s, c = state.e, state.s, state.c
    c2 = c * c
    a = (e + 1.0) * (s + 1.0) - c2
    x = max((e + 1.0) * (s - 1.0) - c2, 0.0)
    y = max((e - 1.0) * (s + 1.0) - c2, 0.0)
    return a, x, y, 4.0 * c2


def classify(state):
    """Name the limiting regime a state falls into."""
    e, s, c = state.e, state.s, state.c
    scale = 1e-12 * (1.0 + e) * (1.0 + s)
    a, x, y, _ = _coefficients(state)
    small_c = abs(c) < 1e-12
    if x < scale and y < scale:
        return THERMAL_PRODUCT if small_c else TMSV
    if x < scale:
        return THERMAL_X if small_c else CASE1_X
    if y < scale:
        return THERMAL_Y if small_c else CASE1_Y
    if small_c:
        return THERMAL_PRODUCT
    d = c * c + e + s - e * s - 1.0
    # 1 - z = D*Q/(XY) with Q = -A
    if abs(d * a / (x * y)) < 1e-10:
        return CASE2
    return GENERIC


def _log_binom(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _xlogy(k, v):
    # k*log(v) with the 0*log(0) = 0 convention
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = k * np.log(v)
    return np.where(k == 0, 0.0, out)


def _generic_log(state, n_s, n_i):
    """Log-probability by the non-negative terminating sum; arrays broadcast."""
    a, x, y, u = _coefficients(state)
    n_s = np.asarray(n_s)
    n_i = np.asarray(n_i)
    kmax = int(np.max(np.minimum(n_s, n_i))) if n_s.size else 0
    base = math.log(4.0 / a) - (n_s + n_i) * math.log(a)
    acc = np.full(np.broadcast(n_s, n_i).shape, -np.inf)
    for k in range(kmax + 1):
        valid = (n_s >= k) & (n_i >= k)
        with np.errstate(invalid="ignore"):
            term = (_log_binom(n_s, k) + _log_binom(n_i, k) + _xlogy(k, u)
                    + _xlogy(n_i - k, x) + _xlogy(n_s - k, y))
        term = np.where(valid, term, -np.inf)
        acc = np.logaddexp(acc, term)
    return base + acc


def _limit_log(state, regime, n_s, n_i):
    e, s, c = state.e, state.s, state.c
    n_s = np.asarray(n_s)
    n_i = np.asarray(n_i)
    a, x, y, u = _coefficients(state)
    with np.errstate(divide="ignore", invalid="ignore"):
        if regime == TMSV:
            # diagonal geometric law with mean (E-1)/2
            nbar = 0.5 * (e - 1.0)
            val = _xlogy(n_s, nbar) - (n_s + 1) * math.log1p(nbar)
            return np.where(n_s == n_i, val, -np.inf)
        if regime == THERMAL_X:
            val = math.log(2.0) + _xlogy(n_s, e - 1.0) - (n_s + 1) * math.log(e + 1.0)
            return np.where(n_i == 0, val, -np.inf)
        if regime == THERMAL_Y:
            val = math.log(2.0) + _xlogy(n_i, s - 1.0) - (n_i + 1) * math.log(s + 1.0)
            return np.where(n_s == 0, val, -np.inf)
        if regime == THERMAL_PRODUCT:
            ls = math.log(2.0) + _xlogy(n_s, e - 1.0) - (n_s + 1) * math.log(e + 1.0)
            li = math.log(2.0) + _xlogy(n_i, s - 1.0) - (n_i + 1) * math.log(s + 1.0)
            return ls + li
        if regime in (CASE1_Y, CASE1_X):
            lo, hi, rest = (n_s, n_i, x) if regime == CASE1_Y else (n_i, n_s, y)
            val = (math.log(4.0 / a) + _log_binom(hi, lo) + _xlogy(lo, u)
                   + _xlogy(hi - lo, rest) - (n_s + n_i) * math.log(a))
            return np.where(hi >= lo, val, -np.inf)
        if regime == CASE2:
            tot = e + s
            val = (math.log(2.0 / tot) + _log_binom(n_s + n_i, n_s)
                   + _xlogy(n_s, (e - 1.0) / tot) + _xlogy(n_i, (s - 1.0) / tot))
            return val
    raise ValueError(f"unknown regime {regime!r}")


def joint_pmf_logeval(state, n_s, n_i):
    """Natural log of ``P(n_S, n_I)``; ``-inf`` marks exact zeros."""
    if not isinstance(state, TwoModeState):
        raise TypeError("joint_pmf_eval needs a TwoModeState")
    n_s = np.asarray(n_s)
    n_i = np.asarray(n_i)
    if np.any(n_s < 0) or np.any(n_i < 0):
        raise ValueError("photon counts must be non-negative")
    regime = classify(state)
    if regime == GENERIC:
        return _generic_log(state, n_s, n_i)
    return _limit_log(state, regime, n_s, n_i)


def joint_pmf_eval(state, n_s, n_i):
    """Probability of detecting ``n_s`` signal and ``n_i`` idler photons."""
    out = np.exp(joint_pmf_logeval(state, n_s, n_i))
    return float(out) if out.ndim == 0 else out


def thermal_pmf(nbar, n_max):
    """Geometric (thermal) law with mean ``nbar`` on ``0..n_max``."""
    n = np.arange(n_max + 1)
    if nbar == 0.0:
        return (n == 0).astype(float)
    return np.exp(n * math.log(nbar) - (n + 1) * math.log1p(nbar))


def _levels_needed(state, tail_bound):
    # the joint tail is at most the sum of the two marginal geometric tails
    need = 0
    for nbar in state.mean_photons:
        if nbar <= 0.0:
            continue
        ratio = nbar / (1.0 + nbar)
        need = max(need, math.ceil(math.log(tail_bound / 2.0) / math.log(ratio)))
    return need


@dataclass(frozen=True)
class JointPhotonPMF:
    """Truncated joint photon-count table ``table[n_S, n_I]``."""

    state: TwoModeState
    n_max: int
    table: np.ndarray = field(repr=False)
    tail_mass: float
    tail_bound: float = DEFAULT_TAIL

    @property
    def cdf(self):
        return np.cumsum(self.table.ravel())

    def log_table(self):
        with np.errstate(divide="ignore"):
            return np.log(self.table)


def joint_pmf_table(state, tail_bound=DEFAULT_TAIL, n_max=None, max_levels=MAX_NMAX):
    """Tabulate ``P(n_S, n_I)`` until the neglected mass is below ``tail_bound``.

    ``n_max`` forces a minimum number of levels (used to give several
    hypotheses a common support).
    """
    if not (0.0 < tail_bound < 1.0):
        raise ValueError("tail_bound must lie in (0, 1)")
    levels = max(_levels_needed(state, tail_bound), int(n_max or 0))
    while True:
        if levels > max_levels:
            raise TruncationError(
                f"table for {state!r} needs more than {max_levels} levels"
            )
        n = np.arange(levels + 1)
        table = joint_pmf_eval(state, n[:, None], n[None, :])
        table = np.atleast_2d(table)
        table = np.where(table < 0.0, 0.0, table)
        tail = max(1.0 - float(table.sum()), 0.0)
        if tail <= tail_bound:
            return JointPhotonPMF(state, levels, table, tail, tail_bound)
        levels = max(levels + 1, int(levels * 1.25))


def joint_pmf_sample(pmf, rng, size=None):
    """Draw ``(n_S, n_I)`` pairs by inverse CDF over the flattened table.

    The neglected tail mass lands in the last cell, a bias of at most
    ``pmf.tail_mass``.
    """
    cdf = pmf.cdf
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, cdf.size - 1)
    n_s, n_i = np.divmod(idx, pmf.n_max + 1)
    if size is None:
        return int(n_s), int(n_i)
    return n_s, n_i


# -- Fock-basis oracle ----------------------------------------------------

def _squeezer_sector(r, d, dim):
    """Amplitudes of exp(r(a b - a^dag b^dag)) in the sector n_a - n_b = d.

    Basis vectors are |j + d, j> for d >= 0 (|j, j - d> otherwise), j < dim.
    """
    j = np.arange(dim - 1)
    shift = abs(d)
    # a b |j+shift, j+... > couples level j+1 down to level j
    off = np.sqrt((j + 1.0) * (j + 1.0 + shift))
    gen = np.zeros((dim, dim))
    gen[j, j + 1] = off
    gen[j + 1, j] = -off
    return linalg.expm(r * gen)


def fock_oracle(state, n_max, pad=None):
    """Reference ``P(n_S, n_I)`` from an explicit truncated Fock construction.

    The state is rebuilt as a two-mode squeezer acting on a product of thermal
    modes (its Williamson form); the squeezer is exponentiated numerically
    within each conserved ``n_S - n_I`` sector. Nothing here uses the
    closed-form expression.
    """
    nu_s, nu_i, r = williamson(state)
    nb_s, nb_i = max(0.5 * (nu_s - 1.0), 0.0), max(0.5 * (nu_i - 1.0), 0.0)
    if pad is None:
        pad = 2 * _levels_needed(state, 1e-16) + 40
    cut = max(n_max + 1, pad)
    p_s = thermal_pmf(nb_s, cut)
    p_i = thermal_pmf(nb_i, cut)
    if 1.0 - p_s.sum() > 1e-6 or 1.0 - p_i.sum() > 1e-6:
        raise TruncationError("Fock cutoff too small for the thermal inputs")
    out = np.zeros((n_max + 1, n_max + 1))
    for d in range(-n_max, n_max + 1):
        shift = abs(d)
        dim = cut + 1 - shift
        if dim <= 0:
            continue
        u = _squeezer_sector(abs(r), d, dim)
        j = np.arange(dim)
        # input weights of |j+shift, j> (d >= 0) or |j, j+shift> (d < 0)
        if d >= 0:
            w = p_s[j + shift] * p_i[j]
        else:
            w = p_s[j] * p_i[j + shift]
        probs = (u ** 2) @ w
        keep = np.arange(min(dim, n_max + 1 - shift))
        if d >= 0:
            out[keep + shift, keep] = probs[keep]
        else:
            out[keep, keep + shift] = probs[keep]
    if 1.0 - out.sum() > 1e-6:
        raise TruncationError(f"n_max={n_max} leaves more than 1e-6 probability untabulated")
    return out
