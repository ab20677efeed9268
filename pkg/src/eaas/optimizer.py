"""Constrained SPSA over per-slot source energies and OPA gains.

Parameters are searched in normalised coordinates (energies divided by the
per-slot budget, gains as ``(G - 1) / gain_cap``) so one perturbation size
fits both blocks. Every iterate is projected back onto the feasible set:
energies onto ``{x >= 0, sum x = m * budget}``, gains onto ``[1, 1 + cap]``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian_core import nulling_gain
from .photon_stats import TruncationError
from .projections import project_simplex
from .simulation import estimate_error

TARGETS = ("energy", "gain", "both")


@dataclass(frozen=True)
class OptimizationSpec:
    target: str = "energy"
    budget: float = 1.0
    gain_cap: float = None  # defaults to 4 * budget
    iterations: int = 50
    a0: float = None  # None: calibrated so the first step is 10% of the feasible diameter
    c0: float = 0.1
    big_a: float = None  # None: 10% of iterations
    alpha: float = 0.602
    gamma: float = 0.101
    trials_per_eval: int = 20_000
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        if self.gain_cap is None:
            object.__setattr__(self, "gain_cap", 4.0 * self.budget)
        if not self.gain_cap > 0:
            raise ValueError("gain_cap must be positive")
        if self.big_a is None:
            object.__setattr__(self, "big_a", 0.1 * self.iterations)
        for name in ("c0", "alpha", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.a0 is not None and not self.a0 > 0:
            raise ValueError("a0 must be positive")
        if self.big_a < 0 or self.iterations < 1 or self.trials_per_eval < 1:
            raise ValueError("iterations and trials_per_eval must be >= 1, big_a >= 0")


@dataclass
class SPSAResult:
    energies: np.ndarray
    gains: np.ndarray
    best_error: object
    trace: list = field(default_factory=list)
    start_error: object = None

    def write_trace_csv(self, path):
        write_trace_csv(self.trace, path)


def project_energy(x, budget, m):
    """Euclidean projection onto ``{x >= 0, sum x = m * budget}``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (m,):
        raise ValueError(f"expected a length-{m} vector")
    return project_simplex(x, m * budget)


def project_gain(g, gain_cap):
    return np.clip(np.asarray(g, dtype=float), 1.0, 1.0 + gain_cap)


def nulling_gains(pattern, energies):
    """``G0`` per slot, nulling the most transmissive hypothesis of that slot."""
    kappa_max = pattern.kappa.max(axis=0)
    return np.array([nulling_gain(float(n), float(k)).g for n, k in zip(energies, kappa_max)])


def _derive_seed(seed, *path):
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, np.uint64)[0])


class _Problem:
    """Maps normalised parameter vectors to configs and back."""

    def __init__(self, config, spec):
        self.config = config
        self.spec = spec
        self.m = config.pattern.n_slots
        self.opt_energy = spec.target in ("energy", "both")
        self.opt_gain = spec.target in ("gain", "both")

    def start(self):
        parts = []
        if self.opt_energy:
            parts.append(np.full(self.m, 1.0))
        if self.opt_gain:
            parts.append((np.asarray(self.config.gains) - 1.0) / self.spec.gain_cap)
        return self.project(np.concatenate(parts))

    def project(self, u):
        out = []
        i = 0
        if self.opt_energy:
            out.append(project_energy(u[:self.m], 1.0, self.m))
            i = self.m
        if self.opt_gain:
            out.append(np.clip(u[i:i + self.m], 0.0, 1.0))
        return np.concatenate(out)

    def diameter(self):
        d = 0.0
        if self.opt_energy:
            d += 2.0 * self.m ** 2  # simplex of total m: vertex-to-vertex distance squared
        if self.opt_gain:
            d += self.m
        return math.sqrt(d)

    def params(self, u):
        energies = np.asarray(self.config.n_s_per_slot, dtype=float)
        i = 0
        if self.opt_energy:
            energies = u[:self.m] * self.spec.budget
            i = self.m
        if self.opt_gain:
            gains = project_gain(1.0 + u[i:i + self.m] * self.spec.gain_cap, self.spec.gain_cap)
        elif self.opt_energy:
            gains = nulling_gains(self.config.pattern, energies)
        else:
            gains = np.asarray(self.config.gains, dtype=float)
        return energies, gains

    def evaluate(self, u, trials, seed):
        energies, gains = self.params(u)
        cfg = self.config.with_params(energies, gains)
        return estimate_error(cfg, trials, seed, threads=self.spec.threads)


def _safe_eval(problem, u, trials, seed):
    try:
        est = problem.evaluate(u, trials, seed)
    except (TruncationError, ValueError, FloatingPointError, OverflowError):
        return None
    return est if math.isfinite(est.p_hat) else None


def spsa(objective, u0, project, spec, diameter, rng):
    """Generic projected SPSA loop.

    ``objective(u, seed)`` returns an object with ``p_hat`` and ``stderr``
    (or ``None`` when not finite); both evaluations of one iteration get the
    same seed. Returns ``(u_final, trace)``; trace rows hold the iterate
    the gradient was taken at.
    """
    u = project(np.asarray(u0, dtype=float))
    dim = u.size
    a0 = spec.a0
    if a0 is None:
        # size the first step from a pilot gradient estimate
        norms = []
        for r in range(2):
            d = rng.choice([-1.0, 1.0], size=dim)
            s = _derive_seed(spec.seed, 3, r)
            yp = objective(project(u + spec.c0 * d), s)
            ym = objective(project(u - spec.c0 * d), s)
            if yp is not None and ym is not None:
                norms.append(np.linalg.norm((yp.p_hat - ym.p_hat) / (2 * spec.c0 * d)))
        gnorm = max(np.mean(norms) if norms else 0.0, 1e-12)
        a0 = min(0.1 * diameter * (spec.big_a + 1.0) ** spec.alpha / gnorm, 1e6)

    trace = []
    step_scale = 1.0
    for k in range(spec.iterations):
        a_k = step_scale * a0 / (spec.big_a + k + 1.0) ** spec.alpha
        c_k = spec.c0 / (k + 1.0) ** spec.gamma
        delta = rng.choice([-1.0, 1.0], size=dim)
        seed_k = _derive_seed(spec.seed, 2, k)
        yp = objective(project(u + c_k * delta), seed_k)
        ym = objective(project(u - c_k * delta), seed_k)
        row = {"iteration": k, "u": u.copy()}
        if yp is None or ym is None:
            step_scale *= 0.5
            row.update(objective=float("nan"), stderr=float("nan"), flagged=True)
        else:
            ghat = (yp.p_hat - ym.p_hat) / (2.0 * c_k * delta)
            row.update(objective=0.5 * (yp.p_hat + ym.p_hat),
                       stderr=0.5 * math.hypot(yp.stderr, ym.stderr), flagged=False)
            u = project(u - a_k * ghat)
        trace.append(row)
    return u, trace


def spsa_minimize(config, spec):
    """SPSA with Rademacher perturbations and common random numbers.

    The ``+`` and ``-`` evaluations of iteration ``k`` share one MC seed;
    seeds differ across iterations. Returns an ``SPSAResult`` whose best
    point is chosen by re-evaluating the start, the final iterate and the
    best traced iterate at ``10 * trials_per_eval`` trials.
    """
    problem = _Problem(config, spec)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 1])))
    u0 = problem.start()
    trials = spec.trials_per_eval

    def objective(u, seed):
        return _safe_eval(problem, u, trials, seed)

    u, trace = spsa(objective, u0, problem.project, spec, problem.diameter(), rng)
    for row in trace:
        row["energies"], row["gains"] = problem.params(row["u"])

    finite = [r for r in trace if not r["flagged"]]
    candidates = [u0, u]
    if finite:
        candidates.append(min(finite, key=lambda r: r["objective"])["u"])
    final_seed = _derive_seed(spec.seed, 4)
    scored = []
    for cand in candidates:
        est = _safe_eval(problem, cand, 10 * trials, final_seed)
        if est is not None:
            scored.append((est.p_hat, est, cand))
    if not scored:
        raise ArithmeticError("objective not finite at any candidate")
    start_est = scored[0][1] if scored[0][2] is u0 else None
    _, best_est, best_u = min(scored, key=lambda t: t[0])
    energies, gains = problem.params(best_u)
    return SPSAResult(energies, gains, best_est, trace, start_est)


def write_trace_csv(self, path):
        write_trace_csv(self.trace, path)


def project_energy(x, budget, m):
    """Euclidean projection onto ``{x >= 0, sum x = m * budget}``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (m,):
        raise ValueError(f"expected a length-{m} vector")
    return project_simplex(x, m * budget)


def project_gain(g, gain_cap):
    return np.clip(np.asarray(g, dtype=float), 1.0, 1.0 + gain_cap)


def nulling_gains(pattern, energies):
    """``G0`` per slot, nulling the most transmissive hypothesis of that slot."""
    kappa_max = pattern.kappa.max(axis=0)
    return np.array([nulling_gain(float(n), float(k)).g for n, k in zip(energies, kappa_max)])


def _derive_seed(seed, *path):
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, np.uint64)[0])


class _Problem:
    """Maps normalised parameter vectors to configs and back."""

    def __init__(self, config, spec):
        self.config = config
        self.spec = spec
        self.m = config.pattern.n_slots
        self.opt_energy = spec.target in ("energy", "both")
        self.opt_gain = spec.target in ("gain", "both")

    def start(self):
        parts = []
        if self.opt_energy:
            parts.append(np.full(self.m, 1.0))
        if self.opt_gain:
            parts.append((np.asarray(self.config.gains) - 1.0) / self.spec.gain_cap)
        return self.project(np.concatenate(parts))

    def project(self, u):
        out = []
        i = 0
        if self.opt_energy:
            out.append(project_energy(u[:self.m], 1.0, self.m))
            i = self.m
        if self.opt_gain:
            out.append(np.clip(u[i:i + self.m], 0.0, 1.0))
        return np.concatenate(out)

    def diameter(self):
        d = 0.0
        if self.opt_energy:
            d += 2.0 * self.m ** 2  # simplex of total m: vertex-to-vertex distance squared
        if self.opt_gain:
            d += self.m
        return math.sqrt(d)

    def params(self, u):
        energies = np.asarray(self.config.n_s_per_slot, dtype=float)
        i = 0
        if self.opt_energy:
            energies = u[:self.m] * self.spec.budget
            i = self.m
        if self.opt_gain:
            gains = project_gain(1.0 + u[i:i + self.m] * self.spec.gain_cap, self.spec.gain_cap)
        elif self.opt_energy:
            gains = nulling_gains(self.config.pattern, energies)
        else:
            gains = np.asarray(self.config.gains, dtype=float)
        return energies, gains

    def evaluate(self, u, trials, seed):
        energies, gains = self.params(u)
        cfg = self.config.with_params(energies, gains)
        return estimate_error(cfg, trials, seed, threads=self.spec.threads)


def _safe_eval(problem, u, trials, seed):
    try:
        est = problem.evaluate(u, trials, seed)
    except (TruncationError, ValueError, FloatingPointError, OverflowError):
        return None
    return est if math.isfinite(est.p_hat) else None


def spsa_minimize(config, spec):
    """SPSA with Rademacher perturbations and common random numbers.

    The ``+`` and ``-`` evaluations of iteration ``k`` share one MC seed;
    seeds differ across iterations. Returns an ``SPSAResult`` whose best
    point is chosen by re-evaluating the start, the final iterate and the
    best traced iterate at ``10 * trials_per_eval`` trials.
    """
    problem = _Problem(config, spec)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 1])))
    u = problem.start()
    u0 = u.copy()
    dim = u.size
    trials = spec.trials_per_eval

    a0 = spec.a0
    if a0 is None:
        # size the first step from a pilot gradient estimate
        c = spec.c0
        norms = []
        for r in range(2):
            d = rng.choice([-1.0, 1.0], size=dim)
            s = _derive_seed(spec.seed, 3, r)
            yp = _safe_eval(problem, problem.project(u + c * d), trials, s)
            ym = _safe_eval(problem, problem.project(u - c * d), trials, s)
            if yp is not None and ym is not None:
                norms.append(np.linalg.norm((yp.p_hat - ym.p_hat) / (2 * c * d)))
        gnorm = max(np.mean(norms) if norms else 0.0, 1e-12)
        a0 = 0.1 * problem.diameter() * (spec.big_a + 1.0) ** spec.alpha / gnorm
        a0 = min(a0, 1e6)

    trace = []
    step_scale = 1.0
    for k in range(spec.iterations):
        a_k = step_scale * a0 / (spec.big_a + k + 1.0) ** spec.alpha
        c_k = spec.c0 / (k + 1.0) ** spec.gamma
        delta = rng.choice([-1.0, 1.0], size=dim)
        seed_k = _derive_seed(spec.seed, 2, k)
        yp = _safe_eval(problem, problem.project(u + c_k * delta), trials, seed_k)
        ym = _safe_eval(problem, problem.project(u - c_k * delta), trials, seed_k)
        row = {"iteration": k, "u": u.copy()}
        if yp is None or ym is None:
            step_scale *= 0.5
            row.update(objective=float("nan"), stderr=float("nan"), flagged=True)
        else:
            ghat = (yp.p_hat - ym.p_hat) / (2.0 * c_k * delta)
            row.update(objective=0.5 * (yp.p_hat + ym.p_hat),
                       stderr=0.5 * math.hypot(yp.stderr, ym.stderr), flagged=False)
            u = problem.project(u - a_k * ghat)
        energies, gains = problem.params(row["u"])
        row.update(energies=energies, gains=gains)
        trace.append(row)

    finite = [r for r in trace if not r["flagged"]]
    candidates = [u0, u]
    if finite:
        candidates.append(min(finite, key=lambda r: r["objective"])["u"])
    final_seed = _derive_seed(spec.seed, 4)
    scored = []
    for cand in candidates:
        est = _safe_eval(problem, cand, 10 * trials, final_seed)
        if est is not None:
            scored.append((est.p_hat, est, cand))
    if not scored:
        raise ArithmeticError("objective not finite at any candidate")
    start_est = scored[0][1] if scored[0][2] is u0 else None
    _, best_est, best_u = min(scored, key=lambda t: t[0])
    energies, gains = problem.params(best_u)
    return SPSAResult(energies, gains, best_est, trace, start_est)


def write_trace_csv(trace, path):
    """Trace as CSV: iteration, N_S and G per slot, objective, stderr, flagged."""
    if not trace:
        raise ValueError("empty trace")
    m = len(trace[0]["energies"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", *(f"n_s_{i + 1}" for i in range(m)),
                    *(f"g_{i + 1}" for i in range(m)), "objective", "stderr", "flagged"])
        for r in trace:
            w.writerow([r["iteration"], *(f"{v:.17g}" for v in r["energies"]),
                        *(f"{v:.17g}" for v in r["gains"]),
                        f"{r['objective']:.17g}", f"{r['stderr']:.17g}", int(r["flagged"])])


def evaluate_gain_presets(config, trials=100_000, seed=0, spec=None):
    """Errors at ``G = 1``, ``G = G0`` per slot and SPSA-optimised ``G*``.

    All three use the same MC seed. ``G*`` starts from ``G0`` and keeps the
    config's energies. Returns ``{name: (gains, ErrorEstimate)}``.
    """
    m = config.pattern.n_slots
    energies = np.asarray(config.n_s_per_slot, dtype=float)
    g_one = np.ones(m)
    g_zero = nulling_gains(config.pattern, energies)
    budget = float(energies.mean()) or 1.0
    if spec is None:
        spec = OptimizationSpec(target="gain", budget=budget, seed=seed,
                                trials_per_eval=max(trials // 10, 1))
    elif spec.target != "gain":
        raise ValueError("gain presets need a gain-only spec")
    spec_cap = spec.gain_cap
    g_zero_c = project_gain(g_zero, spec_cap)
    opt = spsa_minimize(config.with_params(energies, g_zero_c), spec)
    out = {}
    for name, g in (("G=1", g_one), ("G0", g_zero), ("G*", opt.gains)):
        out[name] = (g, estimate_error(config.with_params(energies, g), trials, seed,
                                       threads=spec.threads))
    return out
