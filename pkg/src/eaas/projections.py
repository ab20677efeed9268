"""Euclidean projections onto the feasible sets used by the optimisers."""
import numpy as np


def project_simplex(y, total):
    """Project ``y`` onto ``{x >= 0, sum(x) = total}`` (sort-and-threshold)."""
    y = np.asarray(y, dtype=float)
    if total <= 0:
        return np.zeros_like(y)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - total
    ind = np.arange(1, y.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    x = np.maximum(y - theta, 0.0)
    # restore the equality exactly against rounding in theta
    pos = x > 0
    x[pos] += (total - x.sum()) / pos.sum()
    return np.maximum(x, 0.0)


def project_capped_simplex(y, budget):
    """Project onto ``{x >= 0, sum(x) <= budget}``."""
    x = np.maximum(np.asarray(y, dtype=float), 0.0)
    if x.sum() <= budget:
        return x
    return project_simplex(y, budget)
