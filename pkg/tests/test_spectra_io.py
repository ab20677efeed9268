import logging

import numpy as np
import pytest

from eaas.spectra_io import (
    PatternError, SlotGrid, SpectrumSeries, TransmissivityPattern, builtin_pattern,
    discretize_spectrum, kpeak_patterns, load_pattern_csv, load_spectrum_csv, save_pattern_csv,
)

WINE = [[0.9460, 0.9749, 0.7853], [0.5659, 0.6218, 0.6846],
        [0.7503, 0.7622, 0.4683], [0.9737, 0.9891, 0.4165]]
DRUG = [[0.9613, 0.9002, 0.8093], [0.9215, 0.8749, 0.7427],
        [0.8360, 0.4002, 0.7556], [0.9867, 0.8749, 0.8522]]


def test_builtin_digits():
    wine, drug = builtin_pattern("wine"), builtin_pattern("drug")
    assert wine.kappa.tolist() == np.array(WINE).T.tolist()
    assert drug.kappa.tolist() == np.array(DRUG).T.tolist()
    assert wine.kappa[0, 0] == 0.9460 and wine.kappa[2, 3] == 0.4165
    assert drug.kappa[1, 2] == 0.4002
    assert (wine.n_hypotheses, wine.n_slots) == (3, 4) == (drug.n_hypotheses, drug.n_slots)
    assert wine.labels == ("methanol", "ethanol", "ethanal")
    assert drug.labels == ("phenyl salicylate", "methyl salicylate", "benzoic acid")
    assert drug.metadata["slot_centers_cm1"][1] == 1000
    with pytest.raises(PatternError):
        builtin_pattern("beer")


@pytest.mark.parametrize("name", ["wine", "drug"])
def test_csv_round_trip(tmp_path, name):
    pat = builtin_pattern(name)
    path = tmp_path / "p.csv"
    save_pattern_csv(pat, path)
    back = load_pattern_csv(path)
    assert np.array_equal(back.kappa, pat.kappa)
    assert back.labels == pat.labels


@pytest.mark.parametrize("body,where", [
    ("slot,a,b\n1,0.5,1.2\n", ":2:3"),
    ("slot,a\n1,0.5\n", ":1"),
    ("slot,a,b\n1,0.5\n", ":2"),
    ("slot,a,b\n1,0.5,x\n", ":2:3"),
])
def test_csv_rejects(tmp_path, body, where):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(PatternError, match=where):
        load_pattern_csv(path)


def test_kpeak_patterns():
    p = kpeak_patterns(4, 2, 0.7, 1.0)
    assert p.n_hypotheses == 6
    assert all((row == 0.7).sum() == 2 for row in p.kappa)
    assert p.labels[0] == "1+2" and p.labels[-1] == "3+4"
    q = kpeak_patterns(10, 1, 0.7, 1.0)
    assert q.n_hypotheses == 10
    assert np.flatnonzero(q.kappa[2] == 0.7).tolist() == [2]
    with pytest.raises(PatternError):
        kpeak_patterns(1, 1, 0.7, 1.0)
    with pytest.raises(MemoryError):
        kpeak_patterns(40, 20, 0.7, 1.0)


def test_pattern_validation():
    with pytest.raises(PatternError):
        TransmissivityPattern(np.array([[0.5, 0.5]]))
    with pytest.raises(PatternError):
        TransmissivityPattern(np.array([[0.5], [1.5]]))


def test_discretize_constant_and_ramp():
    w = np.linspace(400, 2100, 300)
    grid = SlotGrid((500, 1050, 1400, 1800))
    flat = discretize_spectrum(SpectrumSeries(w, np.full_like(w, 0.5)), grid)
    assert flat == pytest.approx(0.5, abs=1e-15)
    ramp = SpectrumSeries(w, 0.2 + 0.3 * (w - 400) / 1700)
    vals = discretize_spectrum(ramp, grid)
    centers = np.array(grid.centers)
    assert vals == pytest.approx(0.2 + 0.3 * (centers - 400) / 1700, abs=1e-12)


def test_discretize_lorentzian_closed_form(frozen):
    w = np.linspace(800, 1300, 200_001)
    t = 1 - 0.6 / (1 + ((w - 1030) / 25) ** 2)
    val = discretize_spectrum(SpectrumSeries(w, t), SlotGrid((1050,), 100.0))[0]
    assert val == pytest.approx(frozen["lorentz_mean"], abs=1e-6)


def test_discretize_refinement_invariant():
    w = np.array([900.0, 1000.0, 1020.0, 1100.0, 1300.0])
    t = np.array([0.9, 0.4, 0.7, 0.8, 0.95])
    coarse = discretize_spectrum(SpectrumSeries(w, t), SlotGrid((1050,)))
    fine_w = np.linspace(900, 1300, 4001)
    fine = discretize_spectrum(SpectrumSeries(fine_w, np.interp(fine_w, w, t)), SlotGrid((1050,)))
    assert fine == pytest.approx(coarse, abs=1e-12)


def test_discretize_empty_window():
    s = SpectrumSeries(np.array([0.0, 100.0]), np.array([0.5, 0.5]))
    with pytest.raises(PatternError, match="slot 0"):
        discretize_spectrum(s, SlotGrid((1000,)))


def test_spectrum_loader_percent(tmp_path, caplog):
    path = tmp_path / "s.csv"
    path.write_text("wavenumber_cm1,transmissivity\n1000,50\n900,80\n")
    with caplog.at_level(logging.WARNING):
        s = load_spectrum_csv(path)
    assert "percent" in caplog.text
    assert s.wavenumber.tolist() == [900, 1000] and s.transmissivity.tolist() == [0.8, 0.5]
    path.write_text("wavenumber_cm1,transmissivity\n1000,150\n900,80\n")
    with pytest.raises(PatternError):
        load_spectrum_csv(path)
