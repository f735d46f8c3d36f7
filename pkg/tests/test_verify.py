"""Statistical machinery: KS test, dithering, convergence checks, probes."""
import numpy as np
import pytest
from scipy.special import ndtr

from meanderwalk import (
    DataError, FddQuery, ParameterError, backward_sample, dither_lattice,
    environment, exact_conditioned_endpoint, fdd_check, ks_test, lemma_probe,
    main_theorem_check, null_calibration, tightness_check, uclt_check,
)
from meanderwalk.verify import _knot_modulus

import oracles


# ---------------------------------------------------------------------------
# KS test

def test_ks_statistic_matches_brute(rng):
    for _ in range(5):
        x = rng.uniform(size=200)
        res = ks_test(x, lambda v: v)
        assert res.statistic == pytest.approx(
            oracles.ks_statistic_brute(x, lambda v: v), abs=1e-12)
        assert res.count == 200


def test_ks_null_uniform_rarely_rejects(rng):
    rejections = 0
    for s in range(100):
        x = np.random.default_rng(s).uniform(size=10_000)
        rejections += ks_test(x, lambda v: v).rejects(0.01)
    assert rejections <= 2


def test_ks_detects_shift(rng):
    x = rng.uniform(size=10_000) + 0.5
    res = ks_test(x, lambda v: np.clip(v, 0, 1))
    assert res.p_value < 1e-6
    assert res.rejects()


def test_ks_statistic_bounds(rng):
    x = rng.normal(size=500)
    res = ks_test(x, ndtr)
    assert 0.0 <= res.statistic <= 1.0
    assert 0.0 <= res.p_value <= 1.0


def test_ks_requires_samples():
    with pytest.raises(DataError):
        ks_test(np.arange(5), lambda v: v)


def test_ks_rejects_non_finite():
    bad = np.array([0.1, np.nan, 0.5] + [0.2] * 20)
    with pytest.raises(DataError):
        ks_test(bad, lambda v: v)


# ---------------------------------------------------------------------------
# lattice dithering

def test_dither_deterministic():
    pts = np.zeros((50, 3, 2), dtype=np.int64)
    ids = np.arange(50)
    a = dither_lattice(pts, ids, (1, 2, 3), seed=4)
    b = dither_lattice(pts, ids, (1, 2, 3), seed=4)
    c = dither_lattice(pts, ids, (1, 2, 3), seed=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_dither_ranges():
    pts = np.zeros((20_000, 1, 2), dtype=np.int64)
    out = dither_lattice(pts, np.arange(20_000), (7,), seed=0)
    first = out[:, 0, 0]
    other = out[:, 0, 1]
    # coordinate 0 spreads over a unit cell plus the half-integer shift
    assert -1.0 <= first.min() and first.max() < 1.0
    assert np.abs(first.mean()) < 0.02
    assert -0.5 <= other.min() and other.max() < 0.5
    # the +-1/2 shift is fair
    assert abs(np.mean(first > 0) - 0.5) < 0.02


def test_dither_shape_guards():
    with pytest.raises(ParameterError):
        dither_lattice(np.zeros((5, 2)), np.arange(5), (1, 2), seed=0)
    with pytest.raises(ParameterError):
        dither_lattice(np.zeros((5, 2, 2)), np.arange(4), (1, 2), seed=0)


def test_dither_smooths_conditioned_marginal(iid_env):
    # end to end: exact conditioned paths, dithered, against the exact
    # DP endpoint law convolved with the dither kernel (U[-1,1] in
    # coordinate 0 by cube + fair half-integer shift)
    n = 16
    paths = backward_sample(iid_env, n, 20_000, seed=2)
    pts = paths[:, [n], :]
    smooth = dither_lattice(pts, np.arange(paths.shape[0]), (n,), seed=2)
    first = smooth[:, 0, 0]
    table = exact_conditioned_endpoint(iid_env, n)
    pts_sup, mass = table.support()
    levels = {}
    for (x1, _), m in zip(pts_sup.tolist(), mass.tolist()):
        levels[x1] = levels.get(x1, 0.0) + m

    def smoothed_cdf(u):
        u = np.asarray(u, dtype=np.float64)
        total = np.zeros_like(u)
        for k, m in levels.items():
            total += m * np.clip((u - k + 1.0) / 2.0, 0.0, 1.0)
        return total

    res = ks_test(first, smoothed_cdf)
    assert res.p_value > 0.01


# ---------------------------------------------------------------------------
# knot modulus

def test_knot_modulus_monotone_and_maximal(rng):
    paths = rng.normal(size=(40, 65, 2)).cumsum(axis=1)
    windows = np.array([1, 4, 16, 64])
    mods = _knot_modulus(paths, 64, windows)
    assert mods.shape == (4, 40)
    assert np.all(np.diff(mods, axis=0) >= 0)
    # the full window realizes the global oscillation of each coordinate
    full = np.abs(paths[:, :, None, :] - paths[:, None, :, :]).max(axis=(1, 2, 3))
    assert np.allclose(mods[-1], full)


def test_knot_modulus_single_step(rng):
    paths = rng.normal(size=(10, 33, 1)).cumsum(axis=1)
    mods = _knot_modulus(paths, 1, np.array([1]))
    steps = np.abs(np.diff(paths[:, :, 0], axis=1)).max(axis=1)
    assert np.allclose(mods[0], steps)


# ---------------------------------------------------------------------------
# convergence checks (module-scale smoke; acceptance runs the full sizes)

def test_fdd_check_snapping_collision(const_env):
    q = FddQuery(times=(0.5, 0.5005), uppers=(1.0, 1.2))
    with pytest.raises(ParameterError):
        fdd_check(const_env, 100, q, sample_count=200, sigma_replicas=1000)


def test_main_theorem_check_small(const_env):
    rep = main_theorem_check(const_env, 100, sample_count=2000, seed=0,
                             sigma_replicas=20_000)
    names = [r.name for r in rep.results]
    assert "first_coordinate_endpoint_ks" in names
    assert "transverse_axis1_endpoint_ks" in names
    assert "coordinate_decorrelation" in names
    assert set(rep.tables) == {"ecdf_meander", "ecdf_transverse"}
    assert rep.metadata["count"] == 2000


def test_uclt_check_constant_env(const_env):
    rep = uclt_check(const_env, step_counts=(100, 200), sample_count=500,
                     seed=0, sigma_replicas=20_000,
                     reference_resolution=256, reference_factor=2)
    assert [r.name for r in rep.results] == ["deviation_decreases_100_to_200"]
    table_rows = rep.tables["uclt_deviations"][1]
    # 3^2 starts, two step counts, three functionals each
    assert len(table_rows) == 2 * 9 * 3


def test_uclt_needs_two_counts(const_env):
    with pytest.raises(ParameterError):
        uclt_check(const_env, step_counts=(400,))


def test_tightness_rejects_bad_deltas(const_env):
    with pytest.raises(ParameterError):
        tightness_check(const_env, 100, deltas=(0.5, 1.5))


# ---------------------------------------------------------------------------
# lemma probes

def test_lemma_probe_unknown_name(const_env):
    with pytest.raises(ParameterError):
        lemma_probe(const_env, "not_a_probe")


def test_lemma_probe_unknown_parameter(const_env):
    with pytest.raises(ParameterError):
        lemma_probe(const_env, "ball_exit", bogus=1)


def test_level_competition_gambler_ruin(const_env):
    # symmetric environment: from l between 0 and 2l the upper level
    # wins with probability 1/2
    rep = lemma_probe(const_env, "level_competition", scales=(4, 8),
                      sample_count=4000, seed=0)
    rows = rep.tables["level_competition"][1]
    for level, p_up, se, undecided, _ in rows:
        ref = oracles.gambler_ruin_up(level, 2 * level)
        assert ref == 0.5
        assert undecided < 0.01
        assert abs(p_up - ref) < 3 * max(se, 1e-6) + undecided
    assert rep.results[0].passed


def test_slow_ascent_probe_small(const_env):
    rep = lemma_probe(const_env, "slow_ascent", n=100,
                      eps_values=(0.8, 0.4), sample_count=500, seed=0)
    assert rep.name == "lemma_slow_ascent"
    assert len(rep.results) == 1


def test_probe_eps_must_decrease(const_env):
    with pytest.raises(ParameterError):
        lemma_probe(const_env, "transverse_spread", n=100,
                    eps_values=(0.4, 0.8), sample_count=200)


# ---------------------------------------------------------------------------
# null calibration

def test_null_calibration_small():
    rep = null_calibration(references=("uniform", "rayleigh"), seed_count=30,
                           sample_count=2000)
    assert rep.passed
    rows = rep.tables["calibration"][1]
    assert len(rows) == 60


def test_null_calibration_unknown_reference():
    with pytest.raises(ParameterError):
        null_calibration(references=("cauchy",), seed_count=2)
