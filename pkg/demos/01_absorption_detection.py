"""
Absorption detection with an entangled probe
============================================

A single frequency slot either absorbs (kappa_T) or does not (kappa_B). We
probe it with M two-mode squeezed vacuum pairs, null the background with an
OPA and count photons. Below the Monte-Carlo error is set next to the Bell
receiver, the classical Helstrom bound and the quantum Chernoff bound.
"""

import numpy as np

from eaas import ChannelEnv, ExperimentConfig, TransmissivityPattern, estimate_error
from eaas.bounds import helstrom_binary_lb
from eaas.gaussian_core import qcb, return_state
from eaas.optimizer import nulling_gains
from eaas.receivers import bell_receiver_error, ea_error_ideal

n_s, kappa_t, kappa_b = 1.0, 0.75, 0.95
pattern = TransmissivityPattern(np.array([[kappa_b], [kappa_t]]), ("background", "target"))
gains = nulling_gains(pattern, [n_s])
print("nulling gain G0 =", gains[0])

st_t, st_b = return_state(n_s, kappa_t), return_state(n_s, kappa_b)

print(f"{'M':>4} {'EA (MC)':>10} {'Bell':>8} {'Helstrom':>9} {'QCB':>9}")
for m in (1, 10, 40, 90, 150):
    cfg = ExperimentConfig(pattern, ChannelEnv(), n_s, gains, m)
    est = estimate_error(cfg, 50_000, seed=m)
    print(f"{m:4d} {est.p_hat:10.5f} {bell_receiver_error(n_s, kappa_b, kappa_t, m):8.5f} "
          f"{helstrom_binary_lb(kappa_b, kappa_t, n_s, m):9.5f} {qcb(st_t, st_b, m):9.2e}")

# With a perfectly transparent background the nulled output is vacuum, and
# the only error is a zero count on the target: a closed form.
clear = TransmissivityPattern(np.array([[1.0], [kappa_t]]))
cfg = ExperimentConfig(clear, ChannelEnv(), n_s, nulling_gains(clear, [n_s]), 10)
est = estimate_error(cfg, 100_000)
print(f"\nkappa_B = 1, M = 10: MC {est.p_hat:.5f} +/- {est.stderr:.5f}, "
      f"zero-count formula {ea_error_ideal(n_s, kappa_t, 10):.5f}")
