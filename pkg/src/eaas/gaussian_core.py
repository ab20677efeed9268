"""Covariance-matrix algebra for two-mode signal-idler Gaussian states.

States are zero-mean and in the standard form

    [[E*I, C*Z],
     [C*Z, S*I]]

with quadratures q = a + a^dag, p = i(a^dag - a), so the vacuum has unit
variance. Only the three numbers (E, S, C) are carried around.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

PHYS_TOL = 1e-9

_I2 = np.eye(2)
_Z2 = np.diag([1.0, -1.0])


class DomainError(ValueError):
    """Raised when a physical parameter is outside its allowed range."""


class NonPhysicalStateError(DomainError):
    """Raised when a covariance matrix violates the uncertainty principle."""


def _check_unit(name, value):
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


def _check_nonneg(name, value):
    if not (value >= 0.0):
        raise DomainError(f"{name} must be non-negative, got {value!r}")


@dataclass(frozen=True)
class SourceParams:
    n_s: float
    m_copies: int = 1

    def __post_init__(self):
        _check_nonneg("n_s", self.n_s)
        if int(self.m_copies) != self.m_copies or self.m_copies < 1:
            raise DomainError(f"m_copies must be a positive integer, got {self.m_copies!r}")


@dataclass(frozen=True)
class ChannelEnv:
    """Environment of one frequency slot: thermal noise and idler storage loss."""

    n_b: float = 0.0
    kappa_i: float = 1.0

    def __post_init__(self):
        _check_nonneg("n_b", self.n_b)
        _check_unit("kappa_i", self.kappa_i)

    @property
    def ideal(self):
        return self.n_b == 0.0 and self.kappa_i == 1.0


@dataclass(frozen=True)
class Gain:
    g: float = 1.0

    def __post_init__(self):
        if not (self.g >= 1.0):
            raise DomainError(f"OPA gain must be >= 1, got {self.g!r}")


@dataclass(frozen=True)
class TwoModeState:
    """Standard-form two-mode state (E, S, C); rejected if non-physical."""

    e: float
    s: float
    c: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.e, self.s, self.c)):
            raise NonPhysicalStateError(f"non-finite covariance entries {self!r}")
        if self.e < 1.0 - PHYS_TOL or self.s < 1.0 - PHYS_TOL:
            raise NonPhysicalStateError(f"quadrature variance below vacuum: {self!r}")
        nu_minus, _ = _symplectic_pair(self.e, self.s, self.c)
        if nu_minus < 1.0 - PHYS_TOL:
            raise NonPhysicalStateError(
                f"symplectic eigenvalue {nu_minus:.12g} < 1 for {self!r}"
            )

    def covariance(self):
        """The full 4x4 covariance matrix, mode order (q_S, p_S, q_I, p_I)."""
        return np.block([[self.e * _I2, self.c * _Z2], [self.c * _Z2, self.s * _I2]])

    @property
    def mean_photons(self):
        """Mean photon numbers (signal, idler)."""
        return (self.e - 1.0) / 2.0, (self.s - 1.0) / 2.0

    def swapped(self):
        return TwoModeState(self.s, self.e, self.c)


def _symplectic_pair(e, s, c):
    disc = (e + s) ** 2 - 4.0 * c * c
    root = math.sqrt(max(disc, 0.0))
    a = 0.5 * (root - abs(e - s))
    b = 0.5 * (root + abs(e - s))
    return a, b


def symplectic_eigenvalues(state):
    """Return ``(nu_minus, nu_plus)`` of a standard-form covariance matrix.

    For the standard form the Williamson decomposition is a two-mode squeezer
    acting on two thermal modes, which gives
    ``nu_pm = (sqrt((E+S)^2 - 4C^2) +- |E-S|) / 2``.
    Accepts anything with ``e``, ``s`` and ``c`` attributes, so it can also be
    used to diagnose candidate states before construction.
    """
    return _symplectic_pair(state.e, state.s, state.c)


def is_physical(e, s, c, tol=PHYS_TOL):
    if e < 1.0 - tol or s < 1.0 - tol:
        return False
    return _symplectic_pair(e, s, c)[0] >= 1.0 - tol


def williamson(state):
    """Williamson decomposition ``V = T(r) (nu_1 I + nu_2 I) T(r)^T``.

    Returns ``(nu_signal, nu_idler, r)`` where ``T(r)`` is the two-mode
    squeezer ``[[cosh r I, sinh r Z], [sinh r Z, cosh r I]]``. ``nu_signal``
    is the eigenvalue attached to the signal mode, so it is not necessarily
    the smaller one.
    """
    e, s, c = state.e, state.s, state.c
    r = 0.5 * math.atanh(2.0 * c / (e + s)) if c != 0.0 else 0.0
    total = math.sqrt(max((e + s) ** 2 - 4.0 * c * c, 0.0))
    return 0.5 * (total + e - s), 0.5 * (total - e + s), r


def tmsv_state(n_s):
    _check_nonneg("n_s", n_s)
    v = 2.0 * n_s + 1.0
    return TwoModeState(v, v, 2.0 * math.sqrt(n_s * (n_s + 1.0)))


def return_state(n_s, kappa_s, env=ChannelEnv()):
    """State after the thermal-loss signal channel and pure-loss idler storage."""
    _check_nonneg("n_s", n_s)
    _check_unit("kappa_s", kappa_s)
    e = 2.0 * (kappa_s * n_s + env.n_b) + 1.0
    s = 2.0 * env.kappa_i * n_s + 1.0
    c = 2.0 * math.sqrt(kappa_s * env.kappa_i * n_s * (1.0 + n_s))
    return TwoModeState(e, s, c)


def opa_apply(n_s, kappa_s, env=ChannelEnv(), gain=Gain()):
    """Return state after the receiver's two-mode squeezer of gain ``G``.

    Uses ``a_S -> sqrt(G) a_S - sqrt(G-1) a_I^dag`` and the mirror image for
    the idler. The cross term keeps the input sign convention, so ``G = 1``
    returns :func:`return_state` unchanged.
    """
    if not isinstance(gain, Gain):
        gain = Gain(float(gain))
    _check_nonneg("n_s", n_s)
    _check_unit("kappa_s", kappa_s)
    n_b, k_i = env.n_b, env.kappa_i
    ns_eff = gain.g - 1.0
    sq = math.sqrt(ns_eff * (1.0 + ns_eff))
    c_p = math.sqrt(kappa_s * k_i * n_s * (1.0 + n_s))
    occ = 1.0 + k_i * n_s + kappa_s * n_s
    e = (1.0 + 2.0 * kappa_s * n_s - 4.0 * c_p * sq + 2.0 * ns_eff * occ
         + 2.0 * n_b * (1.0 + ns_eff))
    s = (1.0 + 2.0 * k_i * n_s - 4.0 * c_p * sq + 2.0 * ns_eff * occ
         + 2.0 * n_b * ns_eff)
    c = 2.0 * (1.0 + 2.0 * ns_eff) * c_p - 2.0 * sq * (occ + n_b)
    # cancellation in the nulled regime can leave E, S a few ulps below 1
    e = max(e, 1.0) if e > 1.0 - PHYS_TOL else e
    s = max(s, 1.0) if s > 1.0 - PHYS_TOL else s
    return TwoModeState(e, s, c)


def squeezer_matrix(g, inverse=False):
    """Symplectic matrix of the receiver squeezer (or its inverse)."""
    t = math.sqrt(g - 1.0) * (1.0 if inverse else -1.0)
    a = math.sqrt(g)
    return np.block([[a * _I2, t * _Z2], [t * _Z2, a * _I2]])


def squeeze_state(state, g, inverse=False):
    """Apply the squeezer to a standard-form state via the 4x4 covariance."""
    sym = squeezer_matrix(g, inverse)
    v = sym @ state.covariance() @ sym.T
    return TwoModeState(float(v[0, 0]), float(v[2, 2]), float(v[0, 2]))


def nulling_gain(n_s, kappa_b):
    """Gain that maps the background signal mode to vacuum (ideal idler)."""
    _check_nonneg("n_s", n_s)
    _check_unit("kappa_b", kappa_b)
    return Gain(1.0 + n_s * kappa_b / (1.0 + n_s * (1.0 - kappa_b)))


def min_signal_gain(n_s, kappa_s, env=ChannelEnv(), rtol=1e-10):
    """Gain minimising the post-OPA signal photon number (E - 1)/2.

    Golden-section search on ``G in [1, 1 + 10 n_s]``.
    """
    _check_nonneg("n_s", n_s)
    _check_unit("kappa_s", kappa_s)
    if n_s == 0.0:
        return Gain(1.0)

    def signal_photons(g):
        return (opa_apply(n_s, kappa_s, env, Gain(g)).e - 1.0) / 2.0

    hi = 1.0 + 10.0 * n_s
    res = optimize.minimize_scalar(
        signal_photons, bounds=(1.0, hi), method="bounded",
        options={"xatol": rtol * hi},
    )
    g = float(res.x)
    # bounded Brent never evaluates the endpoints exactly
    best = min((1.0, hi, g), key=signal_photons)
    return Gain(best)


# -- quantum Chernoff bound -------------------------------------------------

def _g_fun(p, x):
    # G_p(x) = 2^p / ((x+1)^p - (x-1)^p), with the pure-mode limit G_p(1) = 1
    if x - 1.0 < 1e-13:
        return 1.0
    return 2.0 ** p / ((x + 1.0) ** p - (x - 1.0) ** p)


def _lambda_fun(p, x):
    if x - 1.0 < 1e-13:
        return 1.0
    a, b = (x + 1.0) ** p, (x - 1.0) ** p
    return (a + b) / (a - b)


def _powered_cov(state, p):
    """Covariance ``S diag(Lambda_p(nu)) S^T`` entering Tr rho^p formulas."""
    nu_s, nu_i, r = williamson(state)
    sym = np.block([[math.cosh(r) * _I2, math.sinh(r) * _Z2],
                    [math.sinh(r) * _Z2, math.cosh(r) * _I2]])
    lam = np.diag([_lambda_fun(p, nu_s)] * 2 + [_lambda_fun(p, nu_i)] * 2)
    return sym @ lam @ sym.T, _g_fun(p, nu_s) * _g_fun(p, nu_i)


def chernoff_trace(state_a, state_b, s):
    """``Tr(rho_a^s rho_b^(1-s))`` for two zero-mean two-mode Gaussian states."""
    if s <= 0.0 or s >= 1.0:
        return 1.0
    va, ga = _powered_cov(state_a, s)
    vb, gb = _powered_cov(state_b, 1.0 - s)
    return float(4.0 * ga * gb / math.sqrt(np.linalg.det(va + vb)))


_EDGE = 1e-12


def chernoff_overlap(state_a, state_b, tol=1e-10):
    """Minimise ``Tr rho^s sigma^(1-s)`` over ``s``; returns ``(Q, s_star)``."""
    for st in (state_a, state_b):
        if not isinstance(st, TwoModeState):
            raise TypeError("qcb expects TwoModeState inputs")
    res = optimize.minimize_scalar(
        lambda s: chernoff_trace(state_a, state_b, s),
        bounds=(0.0, 1.0), method="bounded", options={"xatol": tol},
    )
    # Tr rho^s sigma^(1-s) jumps at s = 0, 1 when a state is pure; the
    # infimum then sits at the one-sided limit, so probe just inside.
    best = min(
        [(float(res.fun), float(res.x))]
        + [(chernoff_trace(state_a, state_b, s), s) for s in (_EDGE, 1.0 - _EDGE)]
    )
    return min(best[0], 1.0), best[1]


def qcb(state_t, state_b, m_copies=1):
    """Quantum Chernoff bound ``Q^M / 2`` on the binary error probability."""
    if int(m_copies) != m_copies or m_copies < 1:
        raise DomainError("m_copies must be a positive integer")
    q, _ = chernoff_overlap(state_t, state_b)
    return 0.5 * q ** m_copies
