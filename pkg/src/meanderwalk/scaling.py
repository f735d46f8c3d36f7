"""Diffusive rescaling, covariance estimation, and whitening.

A lattice path X(0..n) is rescaled to the polygonal process

    Z(t) = ( X(floor(nt)) + (nt - floor(nt)) (X(floor(nt)+1) - X(floor(nt))) ) / sqrt(n)

on [0, 1].  The limit covariance is estimated from unconditioned
endpoint replicas, and its inverse Cholesky factor whitens paths so the
first coordinate has unit diffusivity and coordinates decorrelate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (DomainError, FactorizationError, IllConditionedError,
                     ParameterError)
from .walk import WalkPath, simulate_endpoints

MIN_SIGMA_STEPS = 100
MIN_SIGMA_REPLICAS = 1000
MIN_EIGENVALUE = 1e-9


@dataclass(frozen=True)
class ScaledPath:
    """Polygonal interpolation of one lattice path, time scaled to [0, 1]."""
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[0] < 2:
            raise ParameterError("positions must be (n+1, d) with n >= 1")
        pos = pos.copy()
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def step_count(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def __call__(self, t):
        """Value of Z at time(s) t in [0, 1]; vectorized over t."""
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
            raise DomainError("time must lie in [0, 1]")
        n = self.step_count
        s = t_arr * n
        idx = np.minimum(s.astype(np.int64), n - 1)
        frac = s - idx
        base = self.positions[idx]
        ahead = self.positions[idx + 1]
        return (base + frac[..., None] * (ahead - base)) / np.sqrt(n)

    def knots(self) -> np.ndarray:
        """All scaled knot values X(k)/sqrt(n), shape (n+1, d)."""
        return self.positions / np.sqrt(self.step_count)


def rescale(path) -> ScaledPath:
    """Build a ScaledPath from a WalkPath or a raw (n+1, d) array."""
    pos = path.positions if isinstance(path, WalkPath) else path
    return ScaledPath(pos)


def evaluate_scaled(positions: np.ndarray, times) -> np.ndarray:
    """Polygonal values of many paths at fixed times.

    positions: (R, n+1, d) lattice paths; times: (k,) in [0, 1].
    Returns (R, k, d) scaled values.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 3 or pos.shape[1] < 2:
        raise ParameterError("positions must be (R, n+1, d)")
    t_arr = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise DomainError("time must lie in [0, 1]")
    n = pos.shape[1] - 1
    s = t_arr * n
    idx = np.minimum(s.astype(np.int64), n - 1)
    frac = (s - idx)[None, :, None]
    return (pos[:, idx] + frac * (pos[:, idx + 1] - pos[:, idx])) / np.sqrt(n)


@dataclass(frozen=True)
class DiffusivityEstimate:
    """Sample limit covariance Cov[X(n)] / n with jackknife standard errors."""
    matrix: np.ndarray
    stderr: np.ndarray
    step_count: int
    replicas: int

    def __post_init__(self):
        for name in ("matrix", "stderr"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def estimate_sigma(env, n: int, replicas: int, seed: int = 0) -> DiffusivityEstimate:
    """Estimate the diffusivity matrix from unconditioned endpoint replicas.

    Runs ``replicas`` independent walks of ``n`` steps from the origin,
    forms the mean-subtracted sample covariance of the endpoints divided
    by n, and attaches delete-one jackknife standard errors per entry.
    """
    if n < MIN_SIGMA_STEPS:
        raise ParameterError(f"need n >= {MIN_SIGMA_STEPS} for a stable estimate")
    if replicas < MIN_SIGMA_REPLICAS:
        raise ParameterError(f"need >= {MIN_SIGMA_REPLICAS} replicas")
    start = (0,) * env.dimension
    ends = simulate_endpoints(env, start, n, np.arange(replicas), seed).astype(np.float64)
    r = replicas
    sx = ends.sum(axis=0)
    sxy = ends.T @ ends
    full = (sxy - np.outer(sx, sx) / r) / (r - 1)
    # delete-one covariances in closed form, then the jackknife spread
    own = ends[:, :, None] * ends[:, None, :]
    rest = sx[None, :] - ends
    rest_outer = rest[:, :, None] * rest[:, None, :]
    deleted = (sxy[None] - own - rest_outer / (r - 1)) / (r - 2)
    spread = deleted - deleted.mean(axis=0)
    stderr = np.sqrt((r - 1) / r * (spread ** 2).sum(axis=0))
    return DiffusivityEstimate(matrix=full / n, stderr=stderr / n,
                               step_count=n, replicas=replicas)


@dataclass(frozen=True)
class WhiteningMap:
    """Linear map D with D Sigma D^T = I, D = inverse lower Cholesky factor.

    D is lower triangular with D[0,0] = Sigma[0,0]^(-1/2), so the first
    whitened coordinate is X_1 / sigma1 and does not mix in transverse
    coordinates.
    """
    matrix: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        for name in ("matrix", "covariance"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def sigma1(self) -> float:
        """Diffusive scale of the first coordinate, sqrt(Sigma[0,0])."""
        return 1.0 / float(self.matrix[0, 0])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Whiten points of shape (..., d)."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.shape[-1] != self.dimension:
            raise ParameterError("trailing axis must match the map dimension")
        return pts @ self.matrix.T


def build_whitening(matrix: np.ndarray) -> WhiteningMap:
    """Whitening map for a symmetric positive definite covariance.

    Raises IllConditionedError when the smallest eigenvalue is below
    MIN_EIGENVALUE and FactorizationError when the Cholesky factorization
    fails despite the eigenvalue test.
    """
    sigma = np.asarray(matrix, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ParameterError("covariance must be square")
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
        raise ParameterError("covariance must be symmetric")
    eigmin = float(np.linalg.eigvalsh(sigma).min())
    if eigmin < MIN_EIGENVALUE:
        raise IllConditionedError(
            f"smallest eigenvalue {eigmin:.3e} below {MIN_EIGENVALUE:.0e}")
    try:
        lower = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(str(exc)) from None
    dmat = solve_triangular(lower, np.eye(sigma.shape[0]), lower=True)
    return WhiteningMap(matrix=dmat, covariance=sigma)
