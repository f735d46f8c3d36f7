"""Independent reference computations for the test suite.

Everything here is deliberately naive: exhaustive path enumeration,
double-loop statistics, and adaptive quadrature from scipy.  None of it
shares code with the package internals beyond reading conductances, so
agreement is meaningful.
"""

import itertools

import numpy as np
from scipy import integrate
from scipy.special import erf, ndtr

from meanderwalk import conductance


def neighbor_moves(dimension):
    moves = []
    for axis in range(dimension):
        for sign in (1, -1):
            step = [0] * dimension
            step[axis] = sign
            moves.append(tuple(step))
    return moves


def step_probs(env, x):
    """Transition row computed straight from edge conductances."""
    moves = neighbor_moves(env.dimension)
    ws = []
    for m in moves:
        y = tuple(a + b for a, b in zip(x, m))
        ws.append(conductance(env, (x, y)))
    total = sum(ws)
    return [(tuple(a + b for a, b in zip(x, m)), w / total)
            for m, w in zip(moves, ws)]


def enumerate_paths(env, start, n):
    """All n-step paths with their quenched probabilities.

    Exponential in n; keep n <= 6 in d=2 (4096 paths).
    """
    frontier = [((tuple(start),), 1.0)]
    for _ in range(n):
        nxt = []
        for path, prob in frontier:
            for y, p in step_probs(env, path[-1]):
                nxt.append((path + (y,), prob * p))
        frontier = nxt
    return frontier


def brute_endpoint_law(env, start, n):
    law = {}
    for path, prob in enumerate_paths(env, start, n):
        law[path[-1]] = law.get(path[-1], 0.0) + prob
    return law


def brute_survival(env, n):
    """P[first coordinate stays > 0 at times 1..n] from the origin."""
    total = 0.0
    origin = (0,) * env.dimension
    for path, prob in enumerate_paths(env, origin, n):
        if all(pos[0] > 0 for pos in path[1:]):
            total += prob
    return total


def brute_conditioned_endpoint(env, n):
    surv = brute_survival(env, n)
    law = {}
    origin = (0,) * env.dimension
    for path, prob in enumerate_paths(env, origin, n):
        if all(pos[0] > 0 for pos in path[1:]):
            law[path[-1]] = law.get(path[-1], 0.0) + prob / surv
    return law


def ks_statistic_brute(samples, cdf):
    """Double-loop sup over the empirical jump points."""
    xs = np.sort(np.asarray(samples, dtype=float))
    m = len(xs)
    best = 0.0
    for i, x in enumerate(xs):
        f = cdf(x)
        best = max(best, abs((i + 1) / m - f), abs(f - i / m))
    return best


def meander_endpoint_cdf(u):
    return -np.expm1(-0.5 * u * u)


def meander_time_density(t, x):
    """Marginal density of the meander at time t from the origin,
    written directly from the reflection-principle kernels."""
    tail = erf(x / np.sqrt(2.0 * (1.0 - t))) if t < 1.0 else 1.0
    return (x / t) * np.exp(-x * x / (2.0 * t)) * tail / np.sqrt(t)


def meander_box_quad(t, u1, lo, hi):
    """P[first coord <= u1, second in (lo, hi]] at a single time, by
    adaptive quadrature over the meander marginal."""

    def f(x):
        return meander_time_density(t, x)

    mass, _ = integrate.quad(f, 0.0, u1, limit=200)
    gauss = ndtr(hi / np.sqrt(t)) - ndtr(lo / np.sqrt(t))
    return mass * gauss


def gambler_ruin_up(start, upper):
    """P[hit upper before 0] for any symmetric jump law on the segment."""
    return start / upper


def lazy_walk_covariance(n, dimension):
    """Exact endpoint covariance of the always-moving walk in a constant
    environment: each step picks one axis uniformly, so per-axis variance
    is n / dimension and off-diagonals vanish."""
    return np.eye(dimension) * (n / dimension)
