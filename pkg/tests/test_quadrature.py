"""Adaptive Simpson integration and cumulative tables."""
import numpy as np
import pytest
from scipy.integrate import quad

from meanderwalk import QuadratureError
from meanderwalk.quadrature import cumulative_simpson, integrate


def test_polynomial_exact():
    # Simpson is exact on cubics
    assert integrate(lambda x: x ** 3 - 2 * x + 1, 0, 2) == pytest.approx(
        2.0, abs=1e-12)


def test_gaussian_mass():
    val = integrate(lambda x: np.exp(-x * x / 2) / np.sqrt(2 * np.pi), -8, 8)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_oscillatory_against_scipy():
    f = lambda x: np.sin(7 * x) * np.exp(-x)
    ref = quad(f, 0, 5, epsabs=1e-13)[0]
    assert integrate(f, 0, 5) == pytest.approx(ref, abs=1e-10)


def test_reversed_limits_flip_sign():
    assert integrate(np.cos, 1, 0) == pytest.approx(-np.sin(1), abs=1e-12)


def test_empty_interval():
    assert integrate(np.exp, 1.5, 1.5) == 0.0


def test_peaked_integrand():
    # narrow bump forces adaptive refinement
    f = lambda x: np.exp(-((x - 0.37) ** 2) / 2e-6)
    ref = quad(f, 0, 1, epsabs=1e-14, limit=500)[0]
    assert integrate(f, 0, 1) == pytest.approx(ref, rel=1e-8)


def test_rejects_infinite_limits():
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.exp(-x), 0, np.inf)


def test_rejects_non_finite_values():
    with np.errstate(divide="ignore"):
        with pytest.raises(QuadratureError):
            integrate(lambda x: 1.0 / x, -1, 1)


def test_interval_budget():
    rough = lambda x: np.abs(np.sin(1000 * x)) ** 0.1
    with pytest.raises(QuadratureError):
        integrate(rough, 0, 10, tol=1e-14, max_intervals=8)


def test_cumulative_simpson_matches_antiderivative():
    x = np.linspace(0, 2, 401)
    y = 3 * x ** 2
    cum = cumulative_simpson(y, x)
    assert cum[0] == 0.0
    assert np.allclose(cum, x ** 3, atol=1e-8)


def test_cumulative_simpson_monotone_for_positive():
    x = np.linspace(0, 1, 201)
    cum = cumulative_simpson(np.exp(x), x)
    assert np.all(np.diff(cum) > 0)
    assert cum[-1] == pytest.approx(np.e - 1, abs=1e-9)
