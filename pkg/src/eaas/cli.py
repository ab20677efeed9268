"""Command-line experiment driver.

    eaas {detect,position,recognize,bounds,optimize} --config run.toml
         [--seed N] [--trials N] [--out DIR] [--threads N]

Each run writes ``results.csv`` and ``manifest.json`` into ``--out``. Exit
codes: 0 success, 2 config/schema error, 3 numerical failure. The config
schema is documented in ``docs/config.md``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import general_lb, general_lb_closed, helstrom_binary_lb, kpeak_lb, objective_at
from .gaussian_core import ChannelEnv, DomainError, qcb, return_state
from .optimizer import OptimizationSpec, evaluate_gain_presets, nulling_gains, spsa_minimize, write_trace_csv
from .photon_stats import TruncationError
from .receivers import (
    bell_receiver_error, classical_conditional_nuller, classical_homodyne_error,
    classical_unconditional_nuller, ea_error_ideal, opa_homodyne_error_ideal,
)
from .simulation import BLOCK, ErrorEstimate, ExperimentConfig, n_blocks, tally_blocks
from .spectra_io import (
    PatternError, TransmissivityPattern, builtin_pattern, kpeak_patterns, load_pattern_csv,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
CHECKPOINT_TRIALS = 1_000_000
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3


class SchemaError(Exception):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


# -- config schema -----------------------------------------------------------

def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _unit(v):
    return _num(v) and 0.0 <= v <= 1.0


def _nonneg(v):
    return _num(v) and v >= 0 and math.isfinite(v)


def _pos_int(v):
    return _int(v) and v >= 1


def _sweep(v):
    return isinstance(v, list) and len(v) > 0 and all(_pos_int(x) for x in v)


def _n_s(v):
    return _nonneg(v) or (isinstance(v, list) and len(v) > 0 and all(_nonneg(x) for x in v))


def _gains(v):
    return v in ("nulling", "one") or (_num(v) and v >= 1) or (
        isinstance(v, list) and len(v) > 0 and all(_num(x) and x >= 1 for x in v))


def _pattern(v):
    return isinstance(v, str) and v != ""


def _target(v):
    return v in ("energy", "gain", "both")


_COMMON = {
    "seed": (_int, "an integer"),
    "trials": (_pos_int, "a positive integer"),
    "threads": (_pos_int, "a positive integer"),
    "n_b": (_nonneg, "a non-negative number"),
    "kappa_i": (_unit, "a number in [0, 1]"),
}
_PHYS = {
    "n_s": (_nonneg, "a non-negative number"),
    "kappa_t": (_unit, "a number in [0, 1]"),
    "kappa_b": (_unit, "a number in [0, 1]"),
    "m_copies": (_sweep, "a non-empty list of positive integers"),
    "gains": (_gains, "'nulling', 'one', a number >= 1 or a list of them"),
}
_PATTERN = {
    "pattern": (_pattern, "'wine', 'drug' or a CSV path"),
    "m_slots": (_pos_int, "a positive integer"),
    "k": (_pos_int, "a positive integer"),
    "kappa_t": (_unit, "a number in [0, 1]"),
    "kappa_b": (_unit, "a number in [0, 1]"),
}

SCHEMAS = {
    "detect": ({**_COMMON, **_PHYS}, ("n_s", "kappa_t", "kappa_b", "m_copies")),
    "position": ({**_COMMON, **_PHYS, "m_slots": (_pos_int, "a positive integer"),
                  "k": (_pos_int, "a positive integer")},
                 ("n_s", "kappa_t", "kappa_b", "m_copies", "m_slots")),
    "recognize": ({**_COMMON, **_PATTERN, "n_s": (_n_s, "a non-negative number or list"),
                   "gains": _PHYS["gains"], "m_copies": _PHYS["m_copies"],
                   "homodyne_trials": (_pos_int, "a positive integer")},
                  ("n_s", "m_copies")),
    "bounds": ({**_COMMON, **_PATTERN, "n_s": (_nonneg, "a non-negative number"),
                "m_copies": _PHYS["m_copies"]},
               ("n_s", "m_copies")),
    "optimize": ({**_COMMON, **_PATTERN, "n_s": (lambda v: _num(v) and v > 0, "a positive number"),
                  "m_copies": (_pos_int, "a positive integer"),
                  "target": (_target, "'energy', 'gain' or 'both'"),
                  "iterations": (_pos_int, "a positive integer"),
                  "trials_per_eval": (_pos_int, "a positive integer"),
                  "gain_cap": (lambda v: _num(v) and v > 0, "a positive number"),
                  "a0": (lambda v: _num(v) and v > 0, "a positive number"),
                  "c0": (lambda v: _num(v) and v > 0, "a positive number"),
                  "alpha": (lambda v: _num(v) and v > 0, "a positive number"),
                  "gamma": (lambda v: _num(v) and v > 0, "a positive number"),
                  "presets": (lambda v: isinstance(v, bool), "true or false")},
                 ("n_s", "m_copies")),
}

DEFAULTS = {"seed": 0, "trials": 100_000, "threads": 1, "n_b": 0.0, "kappa_i": 1.0,
            "gains": "nulling", "k": 1, "homodyne_trials": 100_000, "target": "energy",
            "iterations": 50, "trials_per_eval": 20_000, "presets": True}


def _key_line(text, key, table=False):
    pat = rf"^[ \t]*\[{re.escape(key)}\]" if table else rf"^[ \t]*{re.escape(key)}[ \t]*="
    m = re.search(pat, text, flags=re.M)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config(path, command):
    """Parse and validate a TOML run config; raises ``SchemaError``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    # keys may sit at top level or under a [<command>] table
    data = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    section = raw.get(command, {})
    if not isinstance(section, dict):
        raise SchemaError(f"[{command}] must be a table", _key_line(text, command))
    data.update(section)
    for name, val in raw.items():
        if isinstance(val, dict) and name != command:
            raise SchemaError(f"unexpected table [{name}] for command {command!r}",
                              _key_line(text, name, table=True))
    schema, required = SCHEMAS[command]
    for key, val in data.items():
        if key not in schema:
            raise SchemaError(f"unknown key {key!r} for {command}", _key_line(text, key))
        check, expected = schema[key]
        if key == "m_copies" and isinstance(val, list) and not val:
            raise SchemaError("empty sweep: m_copies has no values", _key_line(text, key))
        if key == "m_copies" and _pos_int(val) and command != "optimize":
            val = data[key] = [val]
        if not check(val):
            raise SchemaError(f"{key} must be {expected}, got {val!r}", _key_line(text, key))
    for key in required:
        if key not in data:
            raise SchemaError(f"missing required key {key!r}")
    if command in ("recognize", "bounds", "optimize") and "pattern" not in data \
            and "m_slots" not in data:
        raise SchemaError("give either 'pattern' or 'm_slots' (k-peak pattern)")
    for key, val in DEFAULTS.items():
        if key in schema:
            data.setdefault(key, val)
    data["_config_path"] = str(path)
    return data


def _resolve_pattern(cfg):
    if "pattern" in cfg:
        name = cfg["pattern"]
        if name in ("wine", "drug"):
            return builtin_pattern(name)
        p = Path(name)
        if not p.is_absolute():
            p = Path(cfg["_config_path"]).parent / p
        return load_pattern_csv(p)
    for key in ("kappa_t", "kappa_b"):
        if key not in cfg:
            raise SchemaError(f"k-peak pattern needs {key!r}")
    if not cfg["k"] < cfg["m_slots"]:
        raise SchemaError("k must be smaller than m_slots")
    return kpeak_patterns(cfg["m_slots"], cfg["k"], cfg["kappa_t"], cfg["kappa_b"])


def _gain_vector(spec, pattern, energies):
    if spec == "nulling":
        return nulling_gains(pattern, energies)
    if spec == "one":
        return np.ones(pattern.n_slots)
    g = np.broadcast_to(np.asarray(spec, dtype=float), (pattern.n_slots,))
    return g.copy()


def _energy_vector(n_s, m):
    v = np.asarray(n_s, dtype=float)
    if v.ndim and v.size != m:
        raise SchemaError(f"n_s has {v.size} entries but the pattern has {m} slots")
    return np.broadcast_to(v, (m,)).copy()


# -- output ------------------------------------------------------------------

def fmt(v):
    """17 significant digits; missing values as an empty field."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(path, command, header, rows):
    buf = io.StringIO()
    buf.write(f"# eaas {command} results, schema v{SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(row.get(h)) for h in header])
    _atomic_write(path, buf.getvalue())


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


# -- Monte Carlo with checkpoints ---------------------------------------------

def _checkpoint_key(config, trials, seed):
    h = hashlib.sha256()
    h.update(repr((config.pattern.kappa.tobytes(), config.env, config.n_s_per_slot.tobytes(),
                   config.gains.tobytes(), config.m_copies, trials, seed)).encode())
    return h.hexdigest()


def run_mc(config, trials, seed, threads, ckpt_dir=None):
    """Estimate the error, saving tallies every ~``CHECKPOINT_TRIALS`` trials.

    A matching checkpoint in ``ckpt_dir`` is resumed; tallies add exactly, so
    a resumed run reproduces the uninterrupted result.
    """
    total = n_blocks(trials)
    step = max(1, CHECKPOINT_TRIALS // BLOCK)
    key = _checkpoint_key(config, trials, seed)
    ckpt = None
    done, errors, flagged = 0, 0, 0
    if ckpt_dir is not None:
        ckpt = Path(ckpt_dir) / f"checkpoint-{key[:16]}.json"
        if ckpt.exists():
            state = json.loads(ckpt.read_text())
            if state.get("key") == key:
                done, errors, flagged = state["blocks_done"], state["errors"], state["flagged"]
    from .simulation import conditional_logpmf_tables
    tables = conditional_logpmf_tables(config)
    while done < total:
        count = min(step, total - done)
        e, f = tally_blocks(config, trials, seed, first=done, count=count,
                            threads=threads, tables=tables)
        done += count
        errors += e
        flagged += f
        if ckpt is not None and total > step:
            _atomic_write(ckpt, json.dumps({"key": key, "blocks_done": done,
                                            "errors": errors, "flagged": flagged}))
    if ckpt is not None and ckpt.exists():
        ckpt.unlink()
    return ErrorEstimate.from_counts(errors, trials, seed, flagged)


# -- commands ----------------------------------------------------------------

def _env(cfg):
    return ChannelEnv(cfg["n_b"], cfg["kappa_i"])


def run_detect(cfg, out):
    env = _env(cfg)
    pattern = TransmissivityPattern(np.array([[cfg["kappa_b"]], [cfg["kappa_t"]]]),
                                    ("background", "target"))
    n_s = float(cfg["n_s"])
    gains = _gain_vector(cfg["gains"], pattern, [n_s])
    ideal = env.ideal and cfg["kappa_b"] == 1.0 and cfg["gains"] == "nulling"
    st_t = return_state(n_s, cfg["kappa_t"], env)
    st_b = return_state(n_s, cfg["kappa_b"], env)
    rows = []
    for m in cfg["m_copies"]:
        config = ExperimentConfig(pattern, env, n_s, gains, m)
        est = run_mc(config, cfg["trials"], cfg["seed"], cfg["threads"], out)
        rows.append({
            "m_copies": m, "ea_error": est.p_hat, "ea_stderr": est.stderr,
            "ea_closed_form": ea_error_ideal(n_s, cfg["kappa_t"], m) if ideal else None,
            "classical_lb": helstrom_binary_lb(cfg["kappa_b"], cfg["kappa_t"], n_s, m, cfg["n_b"]),
            "qcb": qcb(st_t, st_b, m),
            "bell_error": bell_receiver_error(n_s, cfg["kappa_b"], cfg["kappa_t"], m)
            if env.ideal else None,
            "opa_homodyne_error": opa_homodyne_error_ideal(n_s, cfg["kappa_t"], m) if ideal else None,
            "flagged": est.flagged, "trials": est.trials, "seed": est.seed,
        })
    header = ["m_copies", "ea_error", "ea_stderr", "ea_closed_form", "classical_lb", "qcb",
              "bell_error", "opa_homodyne_error", "flagged", "trials", "seed"]
    return header, rows, {}


def run_position(cfg, out):
    env = _env(cfg)
    m_slots, k = cfg["m_slots"], cfg["k"]
    if not 1 <= k < m_slots:
        raise SchemaError("need 1 <= k < m_slots")
    pattern = kpeak_patterns(m_slots, k, cfg["kappa_t"], cfg["kappa_b"])
    n_s = float(cfg["n_s"])
    gains = _gain_vector(cfg["gains"], pattern, np.full(m_slots, n_s))
    ideal = env.ideal and cfg["kappa_b"] == 1.0 and cfg["gains"] == "nulling" and k == 1
    rows = []
    for m in cfg["m_copies"]:
        config = ExperimentConfig(pattern, env, n_s, gains, m)
        est = run_mc(config, cfg["trials"], cfg["seed"], cfg["threads"], out)
        single = k == 1 and cfg["n_b"] == 0
        rows.append({
            "m_copies": m, "ea_error": est.p_hat, "ea_stderr": est.stderr,
            "ea_closed_form": ea_error_ideal(n_s, cfg["kappa_t"], m, m_slots) if ideal else None,
            "classical_lb": kpeak_lb(m_slots, k, cfg["kappa_b"], cfg["kappa_t"], n_s, m, cfg["n_b"]),
            "classical_unconditional_nuller": classical_unconditional_nuller(
                m_slots, cfg["kappa_b"], cfg["kappa_t"], n_s, m) if single else None,
            "classical_conditional_nuller": classical_conditional_nuller(
                m_slots, cfg["kappa_b"], cfg["kappa_t"], n_s, m) if single else None,
            "flagged": est.flagged, "trials": est.trials, "seed": est.seed,
        })
    header = ["m_copies", "ea_error", "ea_stderr", "ea_closed_form", "classical_lb",
              "classical_unconditional_nuller", "classical_conditional_nuller",
              "flagged", "trials", "seed"]
    return header, rows, {"hypotheses": pattern.n_hypotheses}


def run_recognize(cfg, out):
    env = _env(cfg)
    pattern = _resolve_pattern(cfg)
    energies = _energy_vector(cfg["n_s"], pattern.n_slots)
    gains = _gain_vector(cfg["gains"], pattern, energies)
    n_s_mean = float(energies.mean())
    rows = []
    for m in cfg["m_copies"]:
        config = ExperimentConfig(pattern, env, energies, gains, m)
        est = run_mc(config, cfg["trials"], cfg["seed"], cfg["threads"], out)
        bound = general_lb(pattern.kappa, n_s_mean, m, cfg["n_b"])
        hom, hom_se = classical_homodyne_error(pattern.kappa, bound.allocation.x, cfg["n_b"],
                                               cfg["homodyne_trials"], cfg["seed"])
        rows.append({
            "m_copies": m, "ea_error": est.p_hat, "ea_stderr": est.stderr,
            "classical_lb": bound.probability, "homodyne_error": hom, "homodyne_stderr": hom_se,
            "flagged": est.flagged, "trials": est.trials, "seed": est.seed,
        })
    header = ["m_copies", "ea_error", "ea_stderr", "classical_lb", "homodyne_error",
              "homodyne_stderr", "flagged", "trials", "seed"]
    return header, rows, {"labels": list(pattern.labels), "gains": gains}


def run_bounds(cfg, out):
    pattern = _resolve_pattern(cfg)
    m = pattern.n_slots
    n_s = float(cfg["n_s"])
    rows = []
    for mc in cfg["m_copies"]:
        b = general_lb(pattern.kappa, n_s, mc, cfg["n_b"])
        row = {
            "m_copies": mc, "general_lb": b.probability,
            "uniform_allocation": objective_at(pattern.kappa, np.full(m, mc * n_s), mc, cfg["n_b"]),
            "closed_form": general_lb_closed(pattern.kappa, n_s, mc, cfg["n_b"]),
            "degenerate": b.degenerate, "iterations": b.iterations,
        }
        for i, x in enumerate(b.allocation.x):
            row[f"x_{i + 1}"] = x
        rows.append(row)
    header = ["m_copies", "general_lb", "uniform_allocation", "closed_form", "degenerate",
              "iterations", *(f"x_{i + 1}" for i in range(m))]
    return header, rows, {"labels": list(pattern.labels)}


def run_optimize(cfg, out):
    env = _env(cfg)
    pattern = _resolve_pattern(cfg)
    m = pattern.n_slots
    budget = float(cfg["n_s"])
    energies = np.full(m, budget)
    spec_kw = {k: cfg[k] for k in ("a0", "c0", "alpha", "gamma", "gain_cap") if k in cfg}
    spec = OptimizationSpec(target=cfg["target"], budget=budget, iterations=cfg["iterations"],
                            trials_per_eval=cfg["trials_per_eval"], seed=cfg["seed"],
                            threads=cfg["threads"], **spec_kw)
    config = ExperimentConfig(pattern, env, energies, nulling_gains(pattern, energies),
                              cfg["m_copies"])
    res = spsa_minimize(config, spec)
    trace_path = Path(out) / "trace.csv"
    write_trace_csv(res.trace, trace_path)
    rows = []

    def add(name, en, g, est):
        row = {"setting": name, "error": est.p_hat, "stderr": est.stderr, "trials": est.trials}
        for i in range(m):
            row[f"n_s_{i + 1}"] = en[i]
            row[f"g_{i + 1}"] = g[i]
        rows.append(row)

    if res.start_error is not None:
        add("start", energies, config.gains, res.start_error)
    add("optimized", res.energies, res.gains, res.best_error)
    if cfg["presets"] and spec.target == "energy":
        best = config.with_params(res.energies, res.gains)
        gspec = OptimizationSpec(target="gain", budget=budget, iterations=cfg["iterations"],
                                 trials_per_eval=cfg["trials_per_eval"], seed=cfg["seed"],
                                 threads=cfg["threads"], **spec_kw)
        for name, (g, est) in evaluate_gain_presets(best, cfg["trials"], cfg["seed"], gspec).items():
            add(name, res.energies, g, est)
    header = ["setting", "error", "stderr", "trials",
              *(f"n_s_{i + 1}" for i in range(m)), *(f"g_{i + 1}" for i in range(m))]
    return header, rows, {"trace": str(trace_path), "labels": list(pattern.labels)}


COMMANDS = {
    "detect": run_detect, "position": run_position, "recognize": run_recognize,
    "bounds": run_bounds, "optimize": run_optimize,
}


def build_parser():
    p = argparse.ArgumentParser(prog="eaas", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML run configuration")
        s.add_argument("--seed", type=int, help="64-bit master seed (overrides config)")
        s.add_argument("--trials", type=int, help="Monte-Carlo trials per point")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--threads", type=int, help="worker threads for trial blocks")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = load_config(args.config, args.command)
        for key in ("seed", "trials", "threads"):
            val = getattr(args, key)
            if val is not None:
                if key != "seed" and val < 1:
                    raise SchemaError(f"--{key} must be >= 1")
                if key in SCHEMAS[args.command][0]:
                    cfg[key] = val
        if not 0 <= cfg["seed"] < 2 ** 64:
            raise SchemaError("seed must be an unsigned 64-bit integer")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        header, rows, extra = COMMANDS[args.command](cfg, out)
    except (SchemaError, PatternError) as exc:
        print(f"eaas: config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (TruncationError, DomainError, ArithmeticError, FloatingPointError, np.linalg.LinAlgError,
            MemoryError) as exc:
        print(f"eaas: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    results = out / "results.csv"
    write_results(results, args.command, header, rows)
    resolved = {k: v for k, v in cfg.items() if not k.startswith("_")}
    manifest = {
        "command": args.command, "schema_version": SCHEMA_VERSION, "tool_version": __version__,
        "config_path": cfg["_config_path"], "config": resolved, "seed": cfg.get("seed"),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": [str(results), *([extra["trace"]] if "trace" in extra else [])],
        **{k: v for k, v in extra.items() if k != "trace"},
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, default=_json_default) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
