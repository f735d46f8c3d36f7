"""Brownian meander analytics and reference samplers.

The limit object for the conditioned, whitened walk is the product of a
Brownian meander (first coordinate) and d-1 independent standard
Brownian motions.  This module provides the meander's closed-form
densities, box probabilities of the product law up to three time points,
and counter-based path samplers for both factors.

Conventions (x, y > 0, 0 < s < t <= 1):

    ray(v)        = erf(v / sqrt 2)
                  = P[ |N(0,1)| <= v ], written tilde_N below
    g(t, x, y)    = (2 pi t)^(-1/2) [ e^{-(y-x)^2 / 2t} - e^{-(y+x)^2 / 2t} ]
                    (heat kernel on (0, oo) absorbed at 0)
    q(0, 0; t, y) = t^(-3/2) y e^{-y^2 / 2t} tilde_N(y (1-t)^(-1/2))
    q(s, x; t, y) = g(t-s, x, y) tilde_N(y (1-t)^(-1/2)) / tilde_N(x (1-s)^(-1/2))

with tilde_N(z (1-t)^(-1/2)) read as 1 when t = 1.  The endpoint law is
Rayleigh: P[meander(1) > u] = e^{-u^2/2}.

Integrals are adaptive-Simpson with absolute tolerance 1e-10; infinite
or far limits are truncated at 8 standard deviations of cumulative
motion, a relative remainder below 1e-15.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erf, ndtr

from . import rng
from .errors import (DomainError, ParameterError, SingularQueryError,
                     UnsupportedOrderError)
from .quadrature import DEFAULT_TOL, integrate

TRUNCATION_SD = 8.0
MAX_FDD_ORDER = 3
_SQRT2PI = float(np.sqrt(2.0 * np.pi))

_MEANDER_TAG = 1
_BM_TAG = 2
_BISECT_TAG = 3
_HIT_TAG = 5


def tilde_N(v):
    """P[|N(0,1)| <= v] = sqrt(2/pi) * integral_0^v e^{-u^2/2} du = erf(v / sqrt 2)."""
    arr = np.asarray(v, dtype=np.float64)
    if np.any(arr < 0.0):
        raise DomainError("tilde_N argument must be >= 0")
    out = erf(arr / np.sqrt(2.0))
    return float(out) if np.isscalar(v) or arr.ndim == 0 else out


def g_kernel(t, x1, x2):
    """Absorbed heat kernel g(t, x1, x2) on the positive half-line.

    Evaluated as phi_t(x2 - x1) * (1 - e^{-2 x1 x2 / t}) through expm1,
    which is exact to relative rounding even when x1, x2 are close and
    the two exponentials nearly cancel.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    x1_arr = np.asarray(x1, dtype=np.float64)
    x2_arr = np.asarray(x2, dtype=np.float64)
    if np.any(t_arr <= 0.0) or np.any(t_arr > 1.0):
        raise DomainError("g_kernel needs 0 < t <= 1")
    if np.any(x1_arr < 0.0) or np.any(x2_arr < 0.0):
        raise DomainError("g_kernel needs x1, x2 >= 0")
    gauss = np.exp(-((x2_arr - x1_arr) ** 2) / (2.0 * t_arr)) / (_SQRT2PI * np.sqrt(t_arr))
    out = gauss * (-np.expm1(-2.0 * x1_arr * x2_arr / t_arr))
    if np.isscalar(t) and np.isscalar(x1) and np.isscalar(x2):
        return float(out)
    return out


def meander_density_from_origin(t, x):
    """Density of the meander at time t started from (0, 0).

    q(0, 0; t, x) = t^{-3/2} x e^{-x^2/2t} tilde_N(x (1-t)^{-1/2}); the
    last factor is 1 at t = 1, giving the Rayleigh endpoint density.
    """
    t = float(t)
    if not 0.0 < t <= 1.0:
        raise DomainError("time must lie in (0, 1]")
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(x_arr < 0.0):
        raise DomainError("meander position must be >= 0")
    base = t ** -1.5 * x_arr * np.exp(-x_arr ** 2 / (2.0 * t))
    if t < 1.0:
        base = base * erf(x_arr / np.sqrt(2.0 * (1.0 - t)))
    return float(base) if np.isscalar(x) or x_arr.ndim == 0 else base


def meander_density(t1, x1, t2, x2):
    """Transition density q(t1, x1; t2, x2) of the meander.

    (t1, x1) = (0, 0) selects the origin form; an interior query with
    x1 = 0 has a vanishing conditioning denominator and raises
    SingularQueryError.  Vectorized over x2.
    """
    t1 = float(t1)
    t2 = float(t2)
    if t1 == 0.0:
        if np.any(np.asarray(x1, dtype=np.float64) != 0.0):
            raise DomainError("start level must be 0 at time 0")
        return meander_density_from_origin(t2, x2)
    if not 0.0 < t1 < t2 <= 1.0:
        raise DomainError("times must satisfy 0 <= t1 < t2 <= 1")
    x1_arr = np.asarray(x1, dtype=np.float64)
    x2_arr = np.asarray(x2, dtype=np.float64)
    if np.any(x1_arr == 0.0):
        raise SingularQueryError("interior query with zero start level")
    if np.any(x1_arr < 0.0) or np.any(x2_arr < 0.0):
        raise DomainError("meander position must be >= 0")
    num = 1.0 if t2 == 1.0 else erf(x2_arr / np.sqrt(2.0 * (1.0 - t2)))
    den = erf(x1_arr / np.sqrt(2.0 * (1.0 - t1)))
    out = g_kernel(t2 - t1, x1_arr, x2_arr) * num / den
    if np.isscalar(x1) and np.isscalar(x2):
        return float(out)
    return out


def meander_cdf_from_origin(t, u, tol: float = DEFAULT_TOL) -> float:
    """P[meander(t) <= u], by quadrature of the origin density."""
    t = float(t)
    if not 0.0 < t <= 1.0:
        raise DomainError("time must lie in (0, 1]")
    u = float(u)
    if u <= 0.0:
        return 0.0
    hi = min(u, TRUNCATION_SD * np.sqrt(t))
    if hi <= 0.0:
        return 0.0
    return min(1.0, integrate(lambda y: meander_density_from_origin(t, y), 0.0, hi, tol))


def rayleigh_cdf(u):
    """Endpoint law of the meander: P[meander(1) <= u] = 1 - e^{-u^2/2}."""
    u_arr = np.asarray(u, dtype=np.float64)
    out = -np.expm1(-np.square(np.maximum(u_arr, 0.0)) / 2.0)
    return float(out) if np.isscalar(u) or u_arr.ndim == 0 else out


def endpoint_survival(u: Sequence[float]) -> float:
    """P[Z_1(1) > u_1, ..., Z_d(1) > u_d] for the product limit law:
    exp(-u_1^2/2) times the Gaussian tails of the transverse coordinates."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or u.size < 1:
        raise ParameterError("u must be a non-empty vector")
    if u[0] < 0.0:
        raise DomainError("first-coordinate threshold must be >= 0")
    out = float(np.exp(-u[0] ** 2 / 2.0))
    for v in u[1:]:
        out *= float(ndtr(-v))
    return out


def single_time_box_probability(t: float, u1: float, boxes, tol: float = DEFAULT_TOL) -> float:
    """P[Z_1(t) <= u1, Z_i(t) in (a_i, b_i] for i = 2..d] at one interior time.

    The first factor integrates the origin density; each transverse
    factor is a centred Gaussian of variance t.
    """
    t = float(t)
    if not 0.0 < t < 1.0:
        raise DomainError("single-time law needs 0 < t < 1")
    if u1 <= 0.0:
        raise DomainError("first-coordinate threshold must be > 0")
    p = meander_cdf_from_origin(t, u1, tol)
    root = np.sqrt(t)
    for a, b in boxes:
        if not a < b:
            raise ParameterError(f"box ({a}, {b}) is empty")
        p *= float(ndtr(b / root) - ndtr(a / root))
    return p


# ---------------------------------------------------------------------------
# finite-dimensional distributions

@dataclass(frozen=True)
class FddQuery:
    """Joint event at up to MAX_FDD_ORDER ordered times.

    times: strictly increasing in (0, 1].
    uppers: first-coordinate thresholds u_j > 0 (np.inf allowed); the
        event is meander(t_j) <= u_j for all j.
    boxes: per transverse coordinate, one (a, b) interval per time; the
        event is BM_i(t_j) in (a_j, b_j].  May be an empty tuple for a
        pure meander query (d = 1 marginal of the first coordinate).
    """
    times: tuple
    uppers: tuple
    boxes: tuple = ()

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        uppers = tuple(float(u) for u in self.uppers)
        boxes = tuple(tuple((float(a), float(b)) for a, b in coord)
                      for coord in self.boxes)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "uppers", uppers)
        object.__setattr__(self, "boxes", boxes)
        k = len(times)
        if k < 1:
            raise ParameterError("need at least one time")
        if k > MAX_FDD_ORDER:
            raise UnsupportedOrderError(
                f"{k} time points requested; supported up to {MAX_FDD_ORDER}")
        if any(not 0.0 < t <= 1.0 for t in times):
            raise DomainError("times must lie in (0, 1]")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise DomainError("times must be strictly increasing")
        if len(uppers) != k:
            raise ParameterError("need one first-coordinate threshold per time")
        if any(u <= 0.0 for u in uppers):
            raise DomainError("first-coordinate thresholds must be > 0")
        for coord in boxes:
            if len(coord) != k:
                raise ParameterError("each transverse coordinate needs one box per time")
            for a, b in coord:
                if not a < b:
                    raise ParameterError(f"box ({a}, {b}) is empty")

    @property
    def order(self) -> int:
        return len(self.times)

    @property
    def dimension(self) -> int:
        return 1 + len(self.boxes)


def _reaches(times) -> list:
    """Cumulative 8-sigma envelopes used to truncate integration limits."""
    out = []
    acc = 0.0
    prev = 0.0
    for t in times:
        acc += TRUNCATION_SD * np.sqrt(t - prev)
        prev = t
        out.append(acc)
    return out


def _simpson_grid(lo: float, hi: float, scale: float, tol: float):
    """Composite Simpson nodes and weights on [lo, hi], resolving
    integrand features of width ``scale`` with at least 128 nodes per
    scale unit (more for tolerances below 1e-8)."""
    per_scale = 128.0 * max(1.0, (1e-8 / tol) ** 0.25)
    count = int(np.ceil(per_scale * (hi - lo) / scale))
    count = min(20001, max(513, count)) | 1
    x = np.linspace(lo, hi, count)
    h = (hi - lo) / (count - 1)
    w = np.full(count, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * (h / 3.0)


def _meander_chain(times, uppers, tol) -> float:
    k = len(times)
    reach = _reaches(times)
    hi0 = min(uppers[0], reach[0])
    if hi0 <= 0.0:
        return 0.0
    if k == 1:
        if times[0] == 1.0:
            return rayleigh_cdf(uppers[0]) if np.isfinite(uppers[0]) else 1.0
        return integrate(lambda y: meander_density_from_origin(times[0], y),
                         0.0, hi0, tol)

    # Level-by-level kernel iteration on Simpson grids.  The transition
    # normalizers tilde_N telescope across the chain, so the iterated
    # integrand is the plain absorbed-kernel product with a single
    # tilde_N weight at the final level (1 when t_k = 1); everything is
    # smooth and vectorizes, keeping order-3 queries cheap.
    deltas = [times[0]] + [t2 - t1 for t1, t2 in zip(times, times[1:])]
    scales = [np.sqrt(min(deltas[j], deltas[j + 1])) for j in range(k - 1)]
    x, w = _simpson_grid(0.0, hi0, min(scales[0], np.sqrt(times[0])), tol)
    f = times[0] ** -1.5 * x * np.exp(-x * x / (2.0 * times[0]))
    for j in range(1, k - 1):
        hi = min(uppers[j], reach[j])
        if hi <= 0.0:
            return 0.0
        y, wy = _simpson_grid(0.0, hi, scales[j], tol)
        f = (w * f) @ g_kernel(deltas[j], x[:, None], y[None, :])
        x, w = y, wy
    root = np.sqrt(deltas[-1])
    if times[-1] == 1.0:
        # closed form for the final layer: integral_0^u g(delta, x, y) dy
        u = uppers[-1]
        last = (ndtr((u - x) / root) - ndtr(-x / root)
                - ndtr((u + x) / root) + ndtr(x / root))
        return float(w @ (f * last))
    hi = min(uppers[-1], reach[-1])
    if hi <= 0.0:
        return 0.0
    fin_scale = min(deltas[-1], 1.0 - times[-1])
    y, wy = _simpson_grid(0.0, hi, np.sqrt(fin_scale), tol)
    f = (w * f) @ g_kernel(deltas[-1], x[:, None], y[None, :])
    return float(wy @ (f * erf(y / np.sqrt(2.0 * (1.0 - times[-1])))))


def _gaussian_chain(times, boxes, tol) -> float:
    k = len(times)
    reach = _reaches(times)
    deltas = [times[0]] + [t2 - t1 for t1, t2 in zip(times, times[1:])]
    if k == 1:
        a, b = boxes[0]
        root = np.sqrt(times[0])
        return float(ndtr(b / root) - ndtr(a / root))

    # same kernel-iteration scheme as the meander chain, with Gaussian
    # increment kernels on two-sided windows and an analytic last layer
    lo = max(boxes[0][0], -reach[0])
    hi = min(boxes[0][1], reach[0])
    if hi <= lo:
        return 0.0
    scales = [np.sqrt(min(deltas[j], deltas[j + 1])) for j in range(k - 1)]
    x, w = _simpson_grid(lo, hi, scales[0], tol)
    root = np.sqrt(deltas[0])
    f = np.exp(-x * x / (2.0 * deltas[0])) / (_SQRT2PI * root)
    for j in range(1, k - 1):
        lo = max(boxes[j][0], -reach[j])
        hi = min(boxes[j][1], reach[j])
        if hi <= lo:
            return 0.0
        y, wy = _simpson_grid(lo, hi, scales[j], tol)
        root = np.sqrt(deltas[j])
        ker = np.exp(-((y[None, :] - x[:, None]) ** 2)
                     / (2.0 * deltas[j])) / (_SQRT2PI * root)
        f = (w * f) @ ker
        x, w = y, wy
    a, b = boxes[-1]
    root = np.sqrt(deltas[-1])
    last = ndtr((b - x) / root) - ndtr((a - x) / root)
    return float(w @ (f * last))


def fdd_probability(query: FddQuery, tol: float = DEFAULT_TOL) -> float:
    """Probability of the joint event described by an FddQuery under the
    product law meander x BM^(d-1).  Factorizes across coordinates; the
    meander chain iterates the transition density, the transverse chains
    iterate Gaussian increment kernels with analytic innermost layers.
    """
    p = _meander_chain(query.times, query.uppers, tol)
    for coord in query.boxes:
        p *= _gaussian_chain(query.times, coord, tol)
    return p


# ---------------------------------------------------------------------------
# samplers

_MAX_RETRIES = 64


def sample_meander_batch(count: int, resolution: int, seed: int = 0,
                         stream_offset: int = 0) -> np.ndarray:
    """Sample ``count`` meander paths on the grid j/resolution, j = 0..resolution.

    Construction: a fine Brownian path on [0, 1]; tau_1 = its last zero,
    located at cell level and refined by one Brownian bridge bisection
    step; the post-tau_1 segment |W| is rescaled by Delta^{-1/2} in
    space and Delta^{-1} in time.  Cell-level location accounts for
    zeros hidden between grid points: a cell with same-sign endpoints
    a, b still contains a zero with the exact bridge probability
    exp(-2ab/dt), sampled per cell; detection from grid sign changes
    alone misses late zeros at rate O(sqrt(dt)), which visibly biases
    the rescaled law.  Paths whose final excursion is shorter than two
    fine cells are redrawn on a fresh counter stream (the meander is
    independent of tau_1, so redraws do not bias the law).  Returns
    shape (count, resolution + 1); row 0 is exactly 0 at s = 0.
    """
    if resolution < 2:
        raise ParameterError("resolution must be >= 2")
    if count < 1:
        raise ParameterError("count must be >= 1")
    m = int(resolution)
    out = np.empty((count, m + 1), dtype=np.float64)
    chunk = max(1, (1 << 22) // m)
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        ids = np.arange(lo, hi, dtype=np.int64) + stream_offset
        out[lo:hi] = _meander_chunk(ids, m, seed)
    return out


def _meander_chunk(ids: np.ndarray, m: int, seed: int) -> np.ndarray:
    rows = ids.size
    need = np.ones(rows, dtype=bool)
    result = np.empty((rows, m + 1), dtype=np.float64)
    steps = np.arange(1, m + 1, dtype=np.int64)
    dt = 1.0 / m
    for attempt in range(_MAX_RETRIES):
        sel = np.flatnonzero(need)
        if sel.size == 0:
            break
        sub_ids = ids[sel]
        inc = rng.normal(rng.DOMAIN_BROWNIAN, seed, _MEANDER_TAG,
                         sub_ids[:, None], attempt, steps[None, :])
        w = np.empty((sel.size, m + 1), dtype=np.float64)
        w[:, 0] = 0.0
        np.cumsum(inc * np.sqrt(dt), axis=1, out=w[:, 1:])

        # last cell containing a zero: endpoint products <= 0 cross for
        # sure, same-sign cells hide one with probability exp(-2ab/dt);
        # cell 0 starts at the exact zero w_0, so a last cell always exists
        prod = np.maximum(w[:, :-1] * w[:, 1:], 0.0)
        u_hit = rng.uniform(rng.DOMAIN_BROWNIAN, seed, _HIT_TAG,
                            sub_ids[:, None], attempt,
                            np.arange(m, dtype=np.int64)[None, :])
        evidence = u_hit < np.exp(-2.0 * prod / dt)
        last = m - 1 - np.argmax(evidence[:, ::-1], axis=1)

        # one bridge bisection: sample the midpoint of the crossing cell,
        # keep the half whose endpoints still bracket the last crossing
        a = w[np.arange(sel.size), last]
        b = w[np.arange(sel.size), last + 1]
        mid = 0.5 * (a + b) + 0.5 * np.sqrt(dt) * rng.normal(
            rng.DOMAIN_BROWNIAN, seed, _BISECT_TAG, sub_ids, attempt)
        right_half = np.sign(mid) != np.sign(b)
        tau = (last + np.where(right_half, 0.75, 0.25)) * dt
        delta = 1.0 - tau

        ok = delta * m >= 2.0
        if not np.any(ok):
            continue
        oki = np.flatnonzero(ok)
        query = tau[oki, None] + delta[oki, None] * (np.arange(m + 1) * dt)[None, :]
        idx = np.minimum((query * m).astype(np.int64), m - 1)
        frac = query * m - idx
        rows_idx = oki[:, None]
        wq = w[rows_idx, idx] * (1.0 - frac) + w[rows_idx, idx + 1] * frac
        vals = np.abs(wq) / np.sqrt(delta[oki, None])
        vals[:, 0] = 0.0
        result[sel[oki]] = vals
        need[sel[oki]] = False
    if need.any():
        raise ParameterError("meander sampler exceeded retry limit")
    return result


def sample_meander(resolution: int, stream: int = 0, seed: int = 0) -> np.ndarray:
    """One meander path on the grid j/resolution; see sample_meander_batch."""
    return sample_meander_batch(1, resolution, seed=seed, stream_offset=stream)[0]


def sample_product_law(dimension: int, resolution: int, count: int,
                       seed: int = 0, stream_offset: int = 0) -> np.ndarray:
    """Paths of the product law meander x BM^(d-1), shape
    (count, resolution + 1, dimension); coordinate 0 is the meander."""
    if dimension < 1:
        raise ParameterError("dimension must be >= 1")
    m = int(resolution)
    out = np.empty((count, m + 1, dimension), dtype=np.float64)
    out[:, :, 0] = sample_meander_batch(count, m, seed=seed, stream_offset=stream_offset)
    steps = np.arange(1, m + 1, dtype=np.int64)
    chunk = max(1, (1 << 22) // m)
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        ids = np.arange(lo, hi, dtype=np.int64) + stream_offset
        for coord in range(1, dimension):
            inc = rng.normal(rng.DOMAIN_BROWNIAN, seed, _BM_TAG, coord,
                             ids[:, None], steps[None, :])
            out[lo:hi, 0, coord] = 0.0
            np.cumsum(inc / np.sqrt(m), axis=1, out=out[lo:hi, 1:, coord])
    return out
