"""Independent reference implementations used to pin solver results.

Everything here is deliberately naive: exhaustive grids, hand-coded
likelihoods, finite differences. Slow and obviously correct, so the
package's optimized kernels can be checked against them.
"""

import itertools

import numpy as np


def simplex_grid(p: int, step: float):
    """All points of the probability simplex with coordinates on a step
    lattice. step must divide 1 evenly."""
    ticks = int(round(1.0 / step))
    for combo in itertools.combinations_with_replacement(range(p), ticks):
        counts = np.bincount(np.asarray(combo), minlength=p)
        yield counts * step


def simplex_grid_min(a, y, scale: float, step: float = 0.01):
    """Exhaustive search of ||a @ (scale * alpha) - y||^2 over the simplex
    lattice; returns the best objective found."""
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    best = np.inf
    for alpha in simplex_grid(a.shape[1], step):
        r = y - a @ (scale * alpha)
        best = min(best, float(r @ r))
    return best


def cox_partial_loglik(time, event, x, beta):
    """Hand-coded log partial likelihood with Breslow tie handling.

    loop form: for each death time u, add sum of eta over deaths at u
    minus d_u * log(sum of exp(eta) over the risk set at u).
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=int)
    x = np.asarray(x, dtype=float)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    eta = x @ beta
    ll = 0.0
    for u in np.unique(time[event == 1]):
        deaths = (time == u) & (event == 1)
        risk = time >= u
        ll += float(eta[deaths].sum())
        ll -= int(deaths.sum()) * float(np.log(np.exp(eta[risk]).sum()))
    return ll


def central_difference(f, x0, h=1e-6):
    """Central-difference gradient of a scalar function."""
    x0 = np.asarray(x0, dtype=float)
    g = np.zeros_like(x0)
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = h
        g[j] = (f(x0 + e) - f(x0 - e)) / (2 * h)
    return g
