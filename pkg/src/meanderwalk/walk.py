"""Quenched nearest-neighbour walks and their exact transition kernels.

The walk at x jumps to a neighbour y with probability
``conductance(x, y) / pi(x)``, so every step moves (the full position has
strict parity; single coordinates are lazy).  Simulation draws one
uniform per (seed, stream, step) key through :mod:`meanderwalk.rng`, so a
path is a pure function of (environment, start, n, seed, stream) and
batch or worker layout cannot change it.

``exact_kernel`` computes the n-step distribution by dense dynamic
programming over a finite window, optionally absorbing on a target set
AFTER each move (time 0 is exempt), which matches the conditioning
event used elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import rng
from .environment import Environment, incident_conductances
from .errors import ParameterError, ResourceLimitError
from .tableio import write_csv

# Dense DP guard: number of window cells (2n+1)^d must stay below this.
DEFAULT_CELL_CAP = 2 ** 22


@lru_cache(maxsize=None)
def moves(dimension: int) -> np.ndarray:
    """Move table of shape (2d, d): rows +e_1, -e_1, +e_2, -e_2, ...

    Row order matches the columns of
    :func:`meanderwalk.environment.incident_conductances`.
    """
    m = np.zeros((2 * dimension, dimension), dtype=np.int64)
    for j in range(dimension):
        m[2 * j, j] = 1
        m[2 * j + 1, j] = -1
    m.setflags(write=False)
    return m


def step_distribution(env: Environment, x) -> list:
    """One-step law at x: list of (neighbour tuple, probability)."""
    x = np.asarray(list(x), dtype=np.int64)
    w = incident_conductances(env, x)
    p = w / w.sum()
    mv = moves(env.dimension)
    return [(tuple((x + mv[i]).tolist()), float(p[i])) for i in range(2 * env.dimension)]


def _step_batch(env: Environment, pos: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Advance a batch of positions by one step using uniforms u."""
    d = env.dimension
    if env.is_constant:
        idx = np.minimum((u * (2 * d)).astype(np.int64), 2 * d - 1)
    else:
        w = incident_conductances(env, pos)
        c = np.cumsum(w, axis=1)
        c /= c[:, -1:]
        idx = np.minimum(np.sum(c < u[:, None], axis=1), 2 * d - 1)
    return pos + moves(d)[idx]


# ---------------------------------------------------------------------------
# paths

@dataclass(frozen=True)
class WalkPath:
    """A realized trajectory; row k is the position after k steps."""
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ParameterError("positions must have shape (n+1, d)")
        if pos.shape[0] > 1:
            step = np.abs(np.diff(pos, axis=0)).sum(axis=1)
            if not np.all(step == 1):
                raise ParameterError("consecutive positions must be nearest neighbours")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    @property
    def start(self) -> tuple:
        return tuple(self.positions[0].tolist())

    @property
    def end(self) -> tuple:
        return tuple(self.positions[-1].tolist())

    def to_csv(self, path) -> None:
        d = self.dimension
        header = ["time"] + [f"x{j + 1}" for j in range(d)]
        rows = [[k] + self.positions[k].tolist() for k in range(self.n + 1)]
        write_csv(path, header, rows)


def simulate(env: Environment, start, n: int, stream: int = 0, seed: int = 0) -> WalkPath:
    """Simulate n steps from start on the stream's counter-based draws."""
    if n < 0:
        raise ParameterError("n must be >= 0")
    paths = simulate_paths(env, start, n, np.asarray([stream], dtype=np.int64), seed=seed)
    return WalkPath(paths[0])


def simulate_paths(env: Environment, start, n: int, streams: np.ndarray,
                   seed: int = 0) -> np.ndarray:
    """Full histories for a batch of streams; shape (len(streams), n+1, d)."""
    streams = np.asarray(streams, dtype=np.int64)
    d = env.dimension
    r = streams.size
    pos = np.tile(np.asarray(list(start), dtype=np.int64), (r, 1))
    hist = np.empty((n + 1, r, d), dtype=np.int64)
    hist[0] = pos
    for k in range(1, n + 1):
        u = rng.uniform(rng.DOMAIN_WALK, seed, streams, k)
        pos = _step_batch(env, pos, u)
        hist[k] = pos
    return np.ascontiguousarray(hist.transpose(1, 0, 2))


def simulate_endpoints(env: Environment, start, n: int, streams: np.ndarray,
                       seed: int = 0) -> np.ndarray:
    """Endpoints X(n) for a batch of streams; shape (len(streams), d)."""
    streams = np.asarray(streams, dtype=np.int64)
    pos = np.tile(np.asarray(list(start), dtype=np.int64), (streams.size, 1))
    for k in range(1, n + 1):
        u = rng.uniform(rng.DOMAIN_WALK, seed, streams, k)
        pos = _step_batch(env, pos, u)
    return pos


def simulate_endpoint_and_sup(env: Environment, start, n: int, streams: np.ndarray,
                              seed: int = 0) -> tuple:
    """Endpoints and running sup_k max_j |X_j(k) - start_j| per stream."""
    streams = np.asarray(streams, dtype=np.int64)
    origin = np.asarray(list(start), dtype=np.int64)
    pos = np.tile(origin, (streams.size, 1))
    sup = np.zeros(streams.size, dtype=np.int64)
    for k in range(1, n + 1):
        u = rng.uniform(rng.DOMAIN_WALK, seed, streams, k)
        pos = _step_batch(env, pos, u)
        np.maximum(sup, np.abs(pos - origin).max(axis=1), out=sup)
    return pos, sup


def simulate_surviving_paths(env: Environment, n: int, streams: np.ndarray,
                             seed: int = 0, start=None) -> tuple:
    """Histories of the streams whose first coordinate stays > 0 at all
    times 1..n.  Dead streams stop being advanced.  Returns
    (surviving stream ids, paths array (kept, n+1, d))."""
    streams = np.asarray(streams, dtype=np.int64)
    d = env.dimension
    r = streams.size
    if start is None:
        start = (0,) * d
    pos = np.tile(np.asarray(list(start), dtype=np.int64), (r, 1))
    hist = np.zeros((n + 1, r, d), dtype=np.int32)
    hist[0] = pos
    alive = np.ones(r, dtype=bool)
    for k in range(1, n + 1):
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        u = rng.uniform(rng.DOMAIN_WALK, seed, streams[act], k)
        new = _step_batch(env, pos[act], u)
        pos[act] = new
        hist[k, act] = new
        died = new[:, 0] <= 0
        if died.any():
            alive[act[died]] = False
    kept = np.flatnonzero(alive)
    return streams[kept], np.ascontiguousarray(hist[:, kept].transpose(1, 0, 2))


# ---------------------------------------------------------------------------
# target sets

class TargetSet:
    """A lattice set supporting vectorized membership tests."""

    def mask(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, point) -> bool:
        return bool(self.mask(np.asarray([list(point)], dtype=np.int64))[0])


@dataclass(frozen=True)
class Hyperplane(TargetSet):
    """All lattice points whose coordinate ``axis`` equals ``level``."""
    axis: int
    level: int

    def mask(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points)[..., self.axis] == self.level


@dataclass(frozen=True)
class HyperplaneUnion(TargetSet):
    planes: tuple

    def mask(self, points: np.ndarray) -> np.ndarray:
        out = self.planes[0].mask(points)
        for p in self.planes[1:]:
            out = out | p.mask(points)
        return out


@dataclass(frozen=True)
class BallComplement(TargetSet):
    """Points at l1 distance >= radius from center (so the l1 distance
    from the center to the set equals radius)."""
    center: tuple
    radius: int

    def mask(self, points: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=np.int64)
        return np.abs(np.asarray(points) - c).sum(axis=-1) >= self.radius


@dataclass(frozen=True)
class PointSet(TargetSet):
    points: tuple  # tuple of coordinate tuples

    def mask(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64)
        arr = np.asarray(self.points, dtype=np.int64)
        if arr.size == 0:
            return np.zeros(pts.shape[:-1], dtype=bool)
        eq = (pts[..., None, :] == arr).all(axis=-1)
        return eq.any(axis=-1)


def hitting_time(path: WalkPath, target: TargetSet,
                 strict_positive_start: bool = False) -> Optional[int]:
    """First index k with X(k) in the target (k >= 1 if the flag is set);
    None when the path never enters it."""
    hits = target.mask(path.positions)
    lo = 1 if strict_positive_start else 0
    idx = np.flatnonzero(hits[lo:])
    return None if idx.size == 0 else int(idx[0]) + lo


def first_hit_competition(env: Environment, start, targets: Sequence[TargetSet],
                          horizon: int, streams: np.ndarray, seed: int = 0) -> tuple:
    """Race several target sets: returns (winner, time) arrays per stream,
    winner = index of the first target hit (-1 if none within horizon).
    The start point is not examined (hits count from time 1)."""
    streams = np.asarray(streams, dtype=np.int64)
    r = streams.size
    pos = np.tile(np.asarray(list(start), dtype=np.int64), (r, 1))
    winner = np.full(r, -1, dtype=np.int64)
    wtime = np.zeros(r, dtype=np.int64)
    alive = np.ones(r, dtype=bool)
    for k in range(1, horizon + 1):
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        u = rng.uniform(rng.DOMAIN_WALK, seed, streams[act], k)
        new = _step_batch(env, pos[act], u)
        pos[act] = new
        hit_any = np.zeros(act.size, dtype=bool)
        for ti, t in enumerate(targets):
            m = t.mask(new) & ~hit_any
            if m.any():
                sel = act[m]
                winner[sel] = ti
                wtime[sel] = k
                hit_any |= m
        if hit_any.any():
            alive[act[hit_any]] = False
    return winner, wtime


# ---------------------------------------------------------------------------
# exact kernels

@dataclass
class KernelTable:
    """Exact n-step (sub-)probability masses on a window of Z^d."""
    start: tuple
    steps: int
    lower: np.ndarray   # (d,) window lower corner
    mass: np.ndarray    # d-dimensional array over the window

    @property
    def dimension(self) -> int:
        return len(self.start)

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def mass_at(self, point) -> float:
        idx = tuple(int(c) - int(l) for c, l in zip(point, self.lower))
        for i, s in zip(idx, self.mass.shape):
            if i < 0 or i >= s:
                return 0.0
        return float(self.mass[idx])

    def support(self) -> tuple:
        """(points (m, d), masses (m,)) over strictly positive entries,
        ordered lexicographically by point."""
        flat = self.mass.reshape(-1)
        nz = np.flatnonzero(flat > 0.0)
        coords = np.stack(np.unravel_index(nz, self.mass.shape), axis=1)
        return coords + self.lower, flat[nz]

    def probabilities(self) -> dict:
        pts, ms = self.support()
        return {tuple(p.tolist()): float(v) for p, v in zip(pts, ms)}

    def moments(self) -> tuple:
        """Mean vector and covariance of the normalized table."""
        pts, ms = self.support()
        w = ms / ms.sum()
        x = pts.astype(np.float64)
        mean = w @ x
        centered = x - mean
        cov = (centered * w[:, None]).T @ centered
        return mean, cov

    def tv_distance(self, other: "KernelTable") -> float:
        a = self.probabilities()
        b = other.probabilities()
        keys = set(a) | set(b)
        return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)

    def tv_empirical(self, endpoints: np.ndarray) -> float:
        """Total-variation distance to the empirical law of endpoint rows."""
        pts = np.asarray(endpoints, dtype=np.int64)
        counts: dict = {}
        for row in map(tuple, pts.tolist()):
            counts[row] = counts.get(row, 0) + 1
        n = pts.shape[0]
        exact = self.probabilities()
        keys = set(exact) | set(counts)
        return 0.5 * sum(abs(counts.get(k, 0) / n - exact.get(k, 0.0)) for k in keys)

    def to_csv(self, path) -> None:
        d = self.dimension
        pts, ms = self.support()
        header = [f"y{j + 1}" for j in range(d)] + ["mass"]
        rows = [list(map(int, p)) + [float(v)] for p, v in zip(pts, ms)]
        write_csv(path, header, rows)


def exact_kernel(env: Environment, start, n: int, absorbing: Optional[TargetSet] = None,
                 cell_cap: int = DEFAULT_CELL_CAP, window=None,
                 record_step_mass: bool = False):
    """Exact distribution of X(n) by dense DP.

    With an absorbing set, mass landing on the set after a move is
    removed, so the table gives P[X(n) = y, tau > n] where tau is the
    first time >= 1 the walk is in the set.  The default window is the
    full reachable box start +- n; a (lower, upper) override is accepted
    when the caller can prove no live mass reaches the window boundary
    from inside (the absorbed-walk windows used internally satisfy this).

    record_step_mass additionally returns the total surviving mass after
    each step, as an array of length n+1 (index 0 is 1.0).
    """
    if n < 0:
        raise ParameterError("n must be >= 0")
    d = env.dimension
    start = np.asarray(list(start), dtype=np.int64)
    if window is None:
        lower = start - n
        upper = start + n
    else:
        lower = np.asarray(window[0], dtype=np.int64)
        upper = np.asarray(window[1], dtype=np.int64)
    sizes = tuple((upper - lower + 1).tolist())
    cells = int(np.prod(sizes))
    if cells > cell_cap:
        raise ResourceLimitError(
            f"window of {cells} cells exceeds cap {cell_cap}; "
            "reduce n or raise cell_cap")

    grids = np.meshgrid(*[np.arange(lo, hi + 1, dtype=np.int64)
                          for lo, hi in zip(lower, upper)], indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    w = incident_conductances(env, pts)
    prob = (w / w.sum(axis=1, keepdims=True)).reshape(sizes + (2 * d,))
    absorb = absorbing.mask(pts).reshape(sizes) if absorbing is not None else None

    mass = np.zeros(sizes, dtype=np.float64)
    mass[tuple((start - lower).tolist())] = 1.0
    step_mass = [1.0]
    full = (slice(None),) * d
    for _ in range(n):
        new = np.zeros_like(mass)
        for j in range(d):
            src_hi = full[:j] + (slice(0, -1),) + full[j + 1:]
            dst_hi = full[:j] + (slice(1, None),) + full[j + 1:]
            new[dst_hi] += (mass * prob[..., 2 * j])[src_hi]
            new[src_hi] += (mass * prob[..., 2 * j + 1])[dst_hi]
        if absorb is not None:
            new[absorb] = 0.0
        mass = new
        if record_step_mass:
            step_mass.append(float(mass.sum()))
    table = KernelTable(tuple(start.tolist()), n, lower, mass)
    if record_step_mass:
        return table, np.asarray(step_mass)
    return table
