"""Diffusive rescaling, diffusivity estimation, whitening maps."""
import numpy as np
import pytest

from meanderwalk import (
    DomainError, IllConditionedError, ParameterError, build_whitening,
    estimate_sigma, evaluate_scaled, rescale, simulate,
)
from meanderwalk.scaling import MIN_SIGMA_REPLICAS, MIN_SIGMA_STEPS, ScaledPath

import oracles


# ---------------------------------------------------------------------------
# polygonal rescaling

def test_rescale_knots_exact(iid_env):
    path = simulate(iid_env, (0, 0), 64, stream=2)
    z = rescale(path)
    n = path.n
    for k in (0, 1, 13, 64):
        assert np.allclose(z(k / n), path.positions[k] / np.sqrt(n),
                           rtol=0, atol=1e-15)
    assert np.allclose(z.knots(), path.positions / np.sqrt(n))


def test_rescale_midpoint_linear(iid_env):
    path = simulate(iid_env, (0, 0), 50, stream=3)
    z = rescale(path)
    n = path.n
    k = 17
    mid = (path.positions[k] + path.positions[k + 1]) / (2 * np.sqrt(n))
    assert np.allclose(z((k + 0.5) / n), mid, atol=1e-15)


def test_rescale_vectorized_times(iid_env):
    path = simulate(iid_env, (0, 0), 40, stream=4)
    z = rescale(path)
    ts = np.linspace(0, 1, 97)
    batch = z(ts)
    loop = np.stack([z(float(t)) for t in ts])
    assert np.array_equal(batch, loop)


def test_rescale_rejects_out_of_range(iid_env):
    z = rescale(simulate(iid_env, (0, 0), 10, stream=5))
    with pytest.raises(DomainError):
        z(1.5)
    with pytest.raises(DomainError):
        z(-0.1)


def test_scaled_path_read_only(iid_env):
    z = rescale(simulate(iid_env, (0, 0), 10, stream=6))
    with pytest.raises(ValueError):
        z.positions[0, 0] = 99


def test_scaled_path_needs_steps():
    with pytest.raises(ParameterError):
        ScaledPath(np.zeros((1, 2)))


def test_evaluate_scaled_matches_paths(iid_env):
    from meanderwalk import simulate_paths
    paths = simulate_paths(iid_env, (0, 0), 30, np.arange(8), seed=1)
    times = np.array([0.0, 0.17, 0.5, 0.93, 1.0])
    batch = evaluate_scaled(paths, times)
    assert batch.shape == (8, 5, 2)
    for i in range(8):
        z = rescale(paths[i])
        assert np.allclose(batch[i], z(times), atol=1e-14)


# ---------------------------------------------------------------------------
# diffusivity estimation

@pytest.fixture(scope="module")
def const_sigma(const_env):
    return estimate_sigma(const_env, 400, 20_000, seed=0)


def test_sigma_constant_env(const_sigma):
    # covariance per step of the always-moving walk is Identity/d
    expected = oracles.lazy_walk_covariance(1, 2)
    est = const_sigma
    assert np.all(np.abs(est.matrix - expected) <= 3 * est.stderr)


def test_sigma_symmetry_and_shape(const_sigma):
    assert const_sigma.matrix.shape == (2, 2)
    assert const_sigma.matrix[0, 1] == const_sigma.matrix[1, 0]
    assert const_sigma.step_count == 400
    assert const_sigma.replicas == 20_000


def test_sigma_stderr_scale(const_sigma):
    # diagonal jackknife error should sit near sqrt(2/R) * sigma
    approx = np.sqrt(2.0 / const_sigma.replicas) * 0.5
    assert 0.3 * approx < const_sigma.stderr[0, 0] < 3 * approx


def test_sigma_guards(const_env):
    with pytest.raises(ParameterError):
        estimate_sigma(const_env, MIN_SIGMA_STEPS - 1, 2000)
    with pytest.raises(ParameterError):
        estimate_sigma(const_env, 400, MIN_SIGMA_REPLICAS - 1)


def test_sigma_reproducible(const_env):
    a = estimate_sigma(const_env, 100, 1000, seed=3)
    b = estimate_sigma(const_env, 100, 1000, seed=3)
    assert np.array_equal(a.matrix, b.matrix)


# ---------------------------------------------------------------------------
# whitening

def test_whitening_identity_property():
    sigma = np.array([[0.5, 0.1], [0.1, 0.4]])
    w = build_whitening(sigma)
    assert np.allclose(w.matrix @ sigma @ w.matrix.T, np.eye(2), atol=1e-8)


def test_whitening_first_row_structure():
    sigma = np.array([[0.5, 0.1], [0.1, 0.4]])
    w = build_whitening(sigma)
    assert w.matrix[0, 1] == 0.0
    assert w.matrix[0, 0] > 0
    assert w.matrix[0, 0] == pytest.approx(1 / np.sqrt(0.5))
    assert w.sigma1 == pytest.approx(np.sqrt(0.5))


def test_whitening_three_dim():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(3, 3))
    sigma = a @ a.T + 0.5 * np.eye(3)
    w = build_whitening(sigma)
    assert np.allclose(w.matrix @ sigma @ w.matrix.T, np.eye(3), atol=1e-8)
    assert np.allclose(w.matrix[0, 1:], 0.0)
    # whitened sample covariance of mapped gaussians is near identity
    x = rng.multivariate_normal(np.zeros(3), sigma, size=200_000)
    y = w.apply(x)
    assert np.allclose(y.T @ y / x.shape[0], np.eye(3), atol=0.02)


def test_whitening_rejects_ill_conditioned():
    with pytest.raises(IllConditionedError):
        build_whitening(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_whitening_rejects_asymmetric():
    with pytest.raises(ParameterError):
        build_whitening(np.array([[1.0, 0.3], [0.0, 1.0]]))


def test_whitening_apply_shape_guard():
    w = build_whitening(np.eye(2) * 0.5)
    with pytest.raises(ParameterError):
        w.apply(np.zeros((4, 3)))
