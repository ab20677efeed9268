"""
Optimizing energies and gains with SPSA
=======================================

The simulated error is noisy, so we use simultaneous perturbation: two
evaluations per step, whatever the number of slots. Energies stay on the
budget simplex; gains are then tuned and compared with G = 1 and G0.
"""

import numpy as np

from eaas import ChannelEnv, ExperimentConfig
from eaas.optimizer import OptimizationSpec, evaluate_gain_presets, nulling_gains, spsa_minimize
from eaas.spectra_io import builtin_pattern

pat = builtin_pattern("wine")
ones = np.ones(4)
for m in (1, 80):
    cfg = ExperimentConfig(pat, ChannelEnv(), ones, nulling_gains(pat, ones), m)
    res = spsa_minimize(cfg, OptimizationSpec(iterations=30, trials_per_eval=10_000, seed=1))
    print(f"wine M={m}: energies {np.round(res.energies, 3)}  "
          f"error {res.best_error.p_hat:.4f} (uniform {res.start_error.p_hat:.4f})")

# noise makes the gain choice matter more
pat = builtin_pattern("drug")
cfg = ExperimentConfig(pat, ChannelEnv(0.1, 0.9), ones, nulling_gains(pat, ones), 30)
spec = OptimizationSpec(target="gain", iterations=15, trials_per_eval=10_000, seed=2)
for name, (g, est) in evaluate_gain_presets(cfg, trials=50_000, seed=3, spec=spec).items():
    print(f"drug, N_B=0.1, kappa_I=0.9, {name:>4}: gains {np.round(g, 3)}  error {est.p_hat:.4f} +/- {est.stderr:.4f}")
