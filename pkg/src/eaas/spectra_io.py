"""Transmissivity patterns: built-in molecule tables, CSV I/O, FTIR discretization."""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import binom

log = logging.getLogger(__name__)

PATTERN_CAP = 1_000_000


class PatternError(ValueError):
    """Malformed pattern or spectrum input; message carries the location."""


@dataclass(frozen=True)
class TransmissivityPattern:
    """``kappa[h, l]``: transmissivity of slot ``l`` under hypothesis ``h``."""

    kappa: np.ndarray
    labels: tuple = ()
    slot_ids: tuple = ()
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        k = np.array(self.kappa, dtype=float)
        if k.ndim != 2:
            raise PatternError("pattern must be a 2-D H x m matrix")
        if k.shape[0] < 2:
            raise PatternError(f"need at least two hypotheses, got H={k.shape[0]}")
        if np.any(~np.isfinite(k)) or np.any(k < 0) or np.any(k > 1):
            h, l = np.argwhere(~((k >= 0) & (k <= 1)))[0]
            raise PatternError(f"transmissivity {k[h, l]!r} at hypothesis {h}, slot {l} not in [0, 1]")
        k.setflags(write=False)
        object.__setattr__(self, "kappa", k)
        labels = tuple(self.labels) or tuple(f"h{i}" for i in range(k.shape[0]))
        if len(labels) != k.shape[0]:
            raise PatternError("one label per hypothesis required")
        object.__setattr__(self, "labels", labels)
        slots = tuple(self.slot_ids) or tuple(str(i + 1) for i in range(k.shape[1]))
        object.__setattr__(self, "slot_ids", slots)

    @property
    def n_hypotheses(self):
        return self.kappa.shape[0]

    @property
    def n_slots(self):
        return self.kappa.shape[1]


# Columns are hypotheses, rows are the four frequency slots.
_WINE = np.array([
    [0.9460, 0.9749, 0.7853],
    [0.5659, 0.6218, 0.6846],
    [0.7503, 0.7622, 0.4683],
    [0.9737, 0.9891, 0.4165],
])
_DRUG = np.array([
    [0.9613, 0.9002, 0.8093],
    [0.9215, 0.8749, 0.7427],
    [0.8360, 0.4002, 0.7556],
    [0.9867, 0.8749, 0.8522],
])

_BUILTIN = {
    "wine": (_WINE, ("methanol", "ethanol", "ethanal"), (500, 1050, 1400, 1800)),
    # the source lists the second slot as 100 cm^-1; 1000 is meant
    "drug": (_DRUG, ("phenyl salicylate", "methyl salicylate", "benzoic acid"),
             (500, 1000, 1500, 2000)),
}


def builtin_pattern(name):
    """Wine-tasting or drug-testing patterns (H = 3, m = 4)."""
    try:
        k, labels, centers = _BUILTIN[name]
    except KeyError:
        raise PatternError(f"unknown built-in pattern {name!r}; choose from {sorted(_BUILTIN)}") from None
    return TransmissivityPattern(
        k.T.copy(), labels, tuple(str(c) for c in centers),
        metadata={"slot_centers_cm1": centers, "half_width_cm1": 100.0},
    )


def kpeak_patterns(m, k, kappa_t, kappa_b, cap=PATTERN_CAP):
    """All ``C(m, k)`` placements of ``k`` absorbing slots, lexicographic order."""
    if not 1 <= k < m:
        raise PatternError(f"need 1 <= k < m, got m={m}, k={k}")
    h = binom(m, k)
    if h > cap:
        raise MemoryError(f"C({m},{k}) = {h} hypotheses exceeds the cap {cap}")
    rows = []
    labels = []
    for subset in itertools.combinations(range(m), k):
        row = np.full(m, float(kappa_b))
        row[list(subset)] = kappa_t
        rows.append(row)
        labels.append("+".join(str(i + 1) for i in subset))
    return TransmissivityPattern(np.array(rows), tuple(labels))


def save_pattern_csv(pattern, path):
    """Write ``slot,<label...>`` then one row per slot, shortest round-trip floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", *pattern.labels])
        for l, sid in enumerate(pattern.slot_ids):
            w.writerow([sid, *(repr(float(v)) for v in pattern.kappa[:, l])])


def load_pattern_csv(path):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PatternError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if not header or header[0].lower() != "slot":
        raise PatternError(f"{path}:1: header must start with 'slot'")
    labels = header[1:]
    if len(labels) < 2:
        raise PatternError(f"{path}:1: need at least two hypothesis columns, got {len(labels)}")
    slots, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise PatternError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        vals = []
        for col, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise PatternError(f"{path}:{lineno}:{col}: not a number: {cell!r}") from None
            if not (0.0 <= v <= 1.0):
                raise PatternError(f"{path}:{lineno}:{col}: transmissivity {v} not in [0, 1]")
            vals.append(v)
        slots.append(row[0].strip())
        values.append(vals)
    if not values:
        raise PatternError(f"{path}: no slot rows")
    return TransmissivityPattern(np.array(values).T, tuple(labels), tuple(slots))


# -- spectra ------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumSeries:
    wavenumber: np.ndarray
    transmissivity: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.wavenumber, dtype=float)
        t = np.asarray(self.transmissivity, dtype=float)
        if w.shape != t.shape or w.ndim != 1 or w.size < 2:
            raise PatternError("spectrum needs >= 2 (wavenumber, transmissivity) points")
        if np.any(np.diff(w) <= 0):
            raise PatternError("wavenumbers must be strictly increasing")
        if np.any(t < 0) or np.any(t > 1):
            raise PatternError("transmissivity must lie in [0, 1]")
        object.__setattr__(self, "wavenumber", w)
        object.__setattr__(self, "transmissivity", t)


@dataclass(frozen=True)
class SlotGrid:
    centers: tuple
    half_width: float = 100.0


def load_spectrum_csv(path):
    """Read ``wavenumber_cm1,transmissivity``; percent data is rescaled.

    Values in (1.5, 100] are treated as percent and divided by 100 (with a
    warning); anything above 100 is rejected. Rows are sorted by wavenumber.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] != ["wavenumber_cm1", "transmissivity"]:
        raise PatternError(f"{path}:1: header must be 'wavenumber_cm1,transmissivity'")
    w, t = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise PatternError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            w.append(float(row[0]))
            t.append(float(row[1]))
        except ValueError:
            raise PatternError(f"{path}:{lineno}: non-numeric field") from None
    w = np.array(w)
    t = np.array(t)
    if t.size and t.max() > 100.0:
        raise PatternError(f"{path}: transmissivity above 100 cannot be a fraction or percent")
    if t.size and t.max() > 1.5:
        log.warning("%s: transmissivity looks like percent, scaling by 1/100", path)
        t = t / 100.0
    t = np.clip(t, 0.0, 1.0)
    order = np.argsort(w)
    return SpectrumSeries(w[order], t[order])


def _window_mean(w, t, lo, hi):
    # exact integral of the piecewise-linear interpolant over [lo, hi]
    inner = (w > lo) & (w < hi)
    xs = np.concatenate(([lo], w[inner], [hi]))
    ys = np.interp(xs, w, t)
    return float(np.trapezoid(ys, xs)) / (hi - lo)


def discretize_spectrum(series, grid):
    """Window-averaged transmissivity per slot.

    Each slot averages the piecewise-linear spectrum over
    ``[center - half_width, center + half_width]`` clipped to the data range.
    """
    w, t = series.wavenumber, series.transmissivity
    out = []
    for i, c in enumerate(grid.centers):
        lo = max(c - grid.half_width, w[0])
        hi = min(c + grid.half_width, w[-1])
        if not hi > lo:
            raise PatternError(f"slot {i} (center {c} cm^-1) has no spectral data in its window")
        out.append(_window_mean(w, t, lo, hi))
    return np.array(out)


def pattern_from_spectra(spectra, grid, labels=()):
    """Stack discretized spectra (one per hypothesis) into a pattern."""
    rows = [discretize_spectrum(s, grid) for s in spectra]
    return TransmissivityPattern(np.array(rows), tuple(labels),
                                 tuple(str(c) for c in grid.centers))
