"""
Classical lower bounds and their optimal energy split
=====================================================

The general bound minimizes a sum of exponentials over how the photon budget
is spread across slots. For one slot and two hypotheses it collapses to a
closed form; for molecules the optimum can leave slots dark.
"""

import math

import numpy as np

from eaas.bounds import general_lb, helstrom_binary_lb, objective_at
from eaas.spectra_io import builtin_pattern

k = np.array([[0.95], [0.75]])
for m in (10, 100):
    b = general_lb(k, 1.0, m).probability
    closed = math.exp(-m * (math.sqrt(0.95) - math.sqrt(0.75)) ** 2) / 4
    print(f"binary M={m}: general {b:.6g}  closed {closed:.6g}  Helstrom {helstrom_binary_lb(0.95, 0.75, 1.0, m):.6g}")

pat = builtin_pattern("wine")
for m in (1, 10, 80):
    b = general_lb(pat.kappa, 1.0, m)
    uni = objective_at(pat.kappa, np.full(4, float(m)), m)
    share = b.allocation.x / b.allocation.x.sum()
    print(f"wine M={m:2d}: optimized {b.probability:.3e}  uniform {uni:.3e}  split {np.round(share, 3)}")
