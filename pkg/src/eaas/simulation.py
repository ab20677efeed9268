"""Monte-Carlo estimate of the maximum-likelihood recognition error.

Each trial draws ``M`` photon-count pairs per slot from the post-OPA state
of the true hypothesis and decides by maximising the log-posterior. The
likelihood only depends on the per-slot count histograms, so trials are
simulated in vectorised blocks:

* per slot, all hypothesis tables share one support, so sampled counts
  index every table directly;
* the number of non-``(0, 0)`` copies is drawn first (binomial), and only
  those copies are drawn individually; ``(0, 0)`` contributes a fixed
  per-hypothesis baseline;
* zero-probability events are tallied as a separate "impossible" count
  rather than folded in as ``-inf``.

Block ``b`` of ``BLOCK`` trials draws from ``SeedSequence([seed, b])``, so
results depend only on ``(config, trials, seed)`` and not on scheduling.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .gaussian_core import ChannelEnv, Gain, opa_apply
from .photon_stats import DEFAULT_TAIL, joint_pmf_logeval, joint_pmf_table
from .spectra_io import TransmissivityPattern

BLOCK = 8192
TIE_RTOL = 1e-12

__all__ = [
    "BLOCK", "ExperimentConfig", "ErrorEstimate", "SlotTables", "TransmissivityPattern",
    "conditional_logpmf_tables", "sample_trial", "ml_decide", "estimate_error",
    "trial_loglik_naive", "trial_loglik_histogram", "tally_blocks", "n_blocks",
]


@dataclass(frozen=True)
class ExperimentConfig:
    pattern: TransmissivityPattern
    env: ChannelEnv = ChannelEnv()
    n_s_per_slot: np.ndarray = None
    gains: np.ndarray = None
    m_copies: int = 1
    priors: np.ndarray = None
    tail_bound: float = DEFAULT_TAIL

    def __post_init__(self):
        m = self.pattern.n_slots
        h = self.pattern.n_hypotheses
        n_s = np.broadcast_to(np.asarray(
            1.0 if self.n_s_per_slot is None else self.n_s_per_slot, dtype=float), (m,)).copy()
        gains = np.broadcast_to(np.asarray(
            1.0 if self.gains is None else self.gains, dtype=float), (m,)).copy()
        if self.n_s_per_slot is not None and np.ndim(self.n_s_per_slot) and len(self.n_s_per_slot) != m:
            raise ValueError(f"n_s_per_slot has length {len(self.n_s_per_slot)}, expected {m}")
        if self.gains is not None and np.ndim(self.gains) and len(self.gains) != m:
            raise ValueError(f"gains has length {len(self.gains)}, expected {m}")
        if np.any(n_s < 0) or not np.all(np.isfinite(n_s)):
            raise ValueError("n_s_per_slot must be finite and non-negative")
        if np.any(gains < 1) or not np.all(np.isfinite(gains)):
            raise ValueError("gains must be finite and >= 1")
        if int(self.m_copies) != self.m_copies or self.m_copies < 1:
            raise ValueError("m_copies must be a positive integer")
        priors = np.full(h, 1.0 / h) if self.priors is None else np.asarray(self.priors, dtype=float)
        if priors.shape != (h,) or np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be a length-H probability vector")
        for name, val in (("n_s_per_slot", n_s), ("gains", gains), ("priors", priors)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "m_copies", int(self.m_copies))

    def with_params(self, n_s_per_slot=None, gains=None):
        return ExperimentConfig(
            self.pattern, self.env,
            self.n_s_per_slot if n_s_per_slot is None else n_s_per_slot,
            self.gains if gains is None else gains,
            self.m_copies, self.priors, self.tail_bound,
        )


@dataclass(frozen=True)
class ErrorEstimate:
    p_hat: float
    stderr: float
    trials: int
    seed: int
    errors: int = 0
    flagged: int = 0  # trials where every hypothesis had zero likelihood

    @classmethod
    def from_counts(cls, errors, trials, seed, flagged=0):
        p = errors / trials
        return cls(p, math.sqrt(p * (1.0 - p) / trials), trials, seed, errors, flagged)


@dataclass
class SlotTables:
    """Distinct log-PMF tables of one slot on a common ``(n+1) x (n+1)`` support.

    ``index[h]`` names the table used by hypothesis ``h``.
    """

    states: list
    index: np.ndarray
    log_tables: np.ndarray  # (T, n+1, n+1), may contain -inf
    cdfs: np.ndarray = field(repr=False, default=None)  # (T, cells), conditional on not (0, 0)
    p00: np.ndarray = None

    @property
    def n_max(self):
        return self.log_tables.shape[1] - 1

    def logpmf(self, t, a, b):
        """Log-probability under table ``t``, evaluated lazily off the support."""
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        inside = (a <= self.n_max) & (b <= self.n_max)
        out = np.empty(a.shape)
        out[inside] = self.log_tables[t, a[inside], b[inside]]
        if not inside.all():
            out[~inside] = joint_pmf_logeval(self.states[t], a[~inside], b[~inside])
        return out


def conditional_logpmf_tables(config):
    """Per-slot deduplicated log-probability tables.

    Returns a list of ``SlotTables``; hypotheses sharing
    ``(N_S, kappa, G)`` on a slot share one table.
    """
    out = []
    for l in range(config.pattern.n_slots):
        n_s = float(config.n_s_per_slot[l])
        gain = Gain(float(config.gains[l]))
        kappas = config.pattern.kappa[:, l]
        uniq, index = np.unique(kappas, return_inverse=True)
        states = [opa_apply(n_s, float(k), config.env, gain) for k in uniq]
        pmfs = [joint_pmf_table(s, config.tail_bound) for s in states]
        n_max = max(p.n_max for p in pmfs)
        pmfs = [p if p.n_max == n_max else joint_pmf_table(p.state, config.tail_bound, n_max=n_max)
                for p in pmfs]
        tables = np.stack([p.table for p in pmfs])
        with np.errstate(divide="ignore"):
            logs = np.log(tables)
        p00 = tables[:, 0, 0].copy()
        flat = tables.reshape(len(pmfs), -1)[:, 1:]
        cdfs = np.cumsum(flat, axis=1)
        tot = cdfs[:, -1:].copy()
        tot[tot == 0] = 1.0
        cdfs /= tot
        out.append(SlotTables(states, index.astype(np.intp), logs, cdfs, p00))
    return out


def _draw_nonvacuum(rng, cdf, size):
    """Flattened cell indices (>= 1) from the conditional law given not (0, 0)."""
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, cdf.size - 1) + 1


def _simulate_slot(rng, tables, m_copies, true_tid):
    """Log-likelihood deltas for one slot, for the trials that saw a click.

    Returns ``(rows, delta, impossible)``: trial indices, the sum over their
    non-vacuum copies of ``log P_t(cell) - log P_t(0,0)`` per table ``t`` and
    the number of those copies with ``P_t(cell) = 0``.
    """
    n_tab = tables.log_tables.shape[0]
    logs = tables.log_tables.reshape(n_tab, -1)
    parts = []
    for j in range(n_tab):
        trials_j = np.flatnonzero(true_tid == j)
        p_click = 1.0 - tables.p00[j]
        if trials_j.size == 0 or p_click <= 0.0:
            continue
        k = rng.binomial(m_copies, min(p_click, 1.0), size=trials_j.size)
        active = k > 0
        if not active.any():
            continue
        rows, k = trials_j[active], k[active]
        cells = _draw_nonvacuum(rng, tables.cdfs[j], int(k.sum()))
        owner = np.repeat(np.arange(rows.size), k)
        vals = logs[:, cells] - logs[:, :1]  # (T, total)
        bad = ~np.isfinite(vals)
        vals[bad] = 0.0
        delta = np.empty((rows.size, n_tab))
        imp = np.zeros((rows.size, n_tab), dtype=np.int64)
        for t in range(n_tab):
            delta[:, t] = np.bincount(owner, weights=vals[t], minlength=rows.size)
            if bad[t].any():
                imp[:, t] = np.bincount(owner[bad[t]], minlength=rows.size)
        parts.append((rows, delta, imp))
    return parts


def _decide(loglik, impossible, log_prior, rng):
    """MAP decisions with uniform tie-breaking; returns (decisions, flagged mask)."""
    score = loglik + log_prior
    score = np.where(impossible > 0, -np.inf, score)
    best = score.max(axis=1, keepdims=True)
    flagged = ~np.isfinite(best[:, 0])
    tol = TIE_RTOL * np.maximum(1.0, np.abs(np.where(flagged[:, None], 0.0, best)))
    cand = (score >= best - tol) | flagged[:, None]
    # uniform choice among candidates: rank by random keys
    keys = np.where(cand, rng.random(cand.shape), -1.0)
    return keys.argmax(axis=1), flagged


def _run_block(config, tables, base, log_prior, seed, block, n_trials, true_h_mode):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, block])))
    h_count = config.pattern.n_hypotheses
    if true_h_mode == "uniform":
        cum = np.cumsum(config.priors)
        true_h = np.minimum(np.searchsorted(cum, rng.random(n_trials) * cum[-1], side="right"), h_count - 1)
    else:
        true_h = np.full(n_trials, int(true_h_mode))
    loglik = np.broadcast_to(base, (n_trials, h_count)).copy()
    impossible = np.zeros((n_trials, h_count), dtype=np.int64)
    for l, st in enumerate(tables):
        if st.log_tables.shape[0] == 1 and st.p00[0] >= 1.0:
            continue  # every hypothesis gives vacuum here: no information
        for rows, delta, imp in _simulate_slot(rng, st, config.m_copies, st.index[true_h]):
            # each trial has one true table per slot, so rows never repeat here
            loglik[rows] += delta[:, st.index]
            impossible[rows] += imp[:, st.index]
    decisions, flagged = _decide(loglik, impossible, log_prior, rng)
    return int(np.count_nonzero(decisions != true_h)), int(flagged.sum())


def _baseline(config, tables):
    # M copies of (0, 0) on every slot, per hypothesis
    base = np.zeros(config.pattern.n_hypotheses)
    for st in tables:
        base += config.m_copies * st.log_tables[st.index, 0, 0]
    return base


def n_blocks(trials):
    return -(-trials // BLOCK)


def tally_blocks(config, trials, seed, true_h_mode="uniform", first=0, count=None,
                 threads=1, tables=None):
    """``(errors, flagged)`` summed over blocks ``first .. first+count-1``.

    Splitting a run into consecutive block ranges and adding the tallies
    reproduces the single-call result exactly; the CLI checkpoints this way.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if true_h_mode != "uniform":
        h = int(true_h_mode)
        if not 0 <= h < config.pattern.n_hypotheses:
            raise ValueError(f"true hypothesis {h} out of range")
    tables = conditional_logpmf_tables(config) if tables is None else tables
    base = _baseline(config, tables)
    with np.errstate(divide="ignore"):
        log_prior = np.log(config.priors)
    total = n_blocks(trials)
    last = total if count is None else min(total, first + count)
    blocks = range(first, last)

    def job(b):
        size = min(BLOCK, trials - b * BLOCK)
        return _run_block(config, tables, base, log_prior, seed, b, size, true_h_mode)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(job, blocks))
    else:
        results = [job(b) for b in blocks]
    return sum(r[0] for r in results), sum(r[1] for r in results)


def estimate_error(config, trials, seed=0, true_h_mode="uniform", threads=1, tables=None):
    """Fraction of trials whose ML decision differs from the true hypothesis.

    ``true_h_mode`` is ``"uniform"`` (true hypothesis drawn from the priors,
    uniform by default) or an integer ``h`` held fixed.
    """
    errors, flagged = tally_blocks(config, trials, seed, true_h_mode, threads=threads, tables=tables)
    return ErrorEstimate.from_counts(errors, trials, seed, flagged)


# -- single-trial interface ---------------------------------------------------

def sample_trial(config, true_h, rng, tables=None):
    """Counts of one trial: int array ``(m, M, 2)`` of ``(n_S, n_I)`` pairs."""
    if not 0 <= true_h < config.pattern.n_hypotheses:
        raise ValueError(f"true hypothesis {true_h} out of range")
    tables = conditional_logpmf_tables(config) if tables is None else tables
    out = np.zeros((config.pattern.n_slots, config.m_copies, 2), dtype=np.int64)
    for l, st in enumerate(tables):
        t = st.index[true_h]
        probs = np.exp(st.log_tables[t]).ravel()
        cdf = np.cumsum(probs)
        idx = np.minimum(np.searchsorted(cdf, rng.random(config.m_copies) * cdf[-1], side="right"),
                         probs.size - 1)
        out[l, :, 0], out[l, :, 1] = np.divmod(idx, st.n_max + 1)
    return out


def trial_loglik_naive(counts, tables):
    """Per-hypothesis log-likelihood by the copy-by-copy sum (reference path)."""
    h_count = tables[0].index.size
    ll = np.zeros(h_count)
    imp = np.zeros(h_count, dtype=np.int64)
    for l, st in enumerate(tables):
        for h in range(h_count):
            vals = st.logpmf(st.index[h], counts[l, :, 0], counts[l, :, 1])
            bad = ~np.isfinite(vals)
            imp[h] += int(bad.sum())
            ll[h] += float(np.where(bad, 0.0, vals).sum())
    return ll, imp


def trial_loglik_histogram(counts, tables):
    """Same log-likelihood from per-slot count histograms (the sufficient statistic)."""
    h_count = tables[0].index.size
    ll = np.zeros(h_count)
    imp = np.zeros(h_count, dtype=np.int64)
    for l, st in enumerate(tables):
        cells, mult = np.unique(counts[l], axis=0, return_counts=True)
        for t in range(st.log_tables.shape[0]):
            vals = st.logpmf(t, cells[:, 0], cells[:, 1])
            bad = ~np.isfinite(vals)
            hyps = st.index == t
            imp[hyps] += int(mult[bad].sum())
            ll[hyps] += float(np.dot(mult[~bad], vals[~bad]))
    return ll, imp


def ml_decide(counts, tables, priors, rng, return_flag=False):
    """MAP hypothesis for one trial's counts; ties broken uniformly at random."""
    ll, imp = trial_loglik_histogram(counts, tables)
    with np.errstate(divide="ignore"):
        log_prior = np.log(np.asarray(priors, dtype=float))
    dec, flagged = _decide(ll[None, :], imp[None, :], log_prior, rng)
    if return_flag:
        return int(dec[0]), bool(flagged[0])
    return int(dec[0])
