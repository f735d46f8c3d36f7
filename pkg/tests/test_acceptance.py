"""Acceptance checks, one test per criterion.

Each test runs the full procedure at its stated scale and tolerance and
registers one PASS/FAIL line in the terminal summary.  The conditioned
sample set at n = 400 and the whitening matrix are built once and shared
by the criteria that operate at that scale.
"""

import time

import numpy as np
import pytest
from scipy.integrate import quad

import conftest
from meanderwalk.conditioning import (exact_conditioned_endpoint,
                                      rejection_sample, survival_ratio_check,
                                      survival_slope)
from meanderwalk.meander import (FddQuery, g_kernel,
                                 meander_density_from_origin)
from meanderwalk.scaling import build_whitening, estimate_sigma
from meanderwalk.verify import (fdd_check, heatkernel_envelope, lemma_probe,
                                main_theorem_check, null_calibration,
                                tightness_check, uclt_check)

SETUP_SECONDS = {}


def record(number: int, ok: bool, detail: str) -> bool:
    verdict = "PASS" if ok else "FAIL"
    conftest.ACCEPTANCE_LINES.append(f"{verdict} criterion {number}: {detail}")
    return ok


@pytest.fixture(scope="module")
def accepted_400(const_env):
    t0 = time.monotonic()
    sample = rejection_sample(const_env, 400, 20_000, seed=0)
    SETUP_SECONDS["samples"] = time.monotonic() - t0
    return sample


@pytest.fixture(scope="module")
def whitening_400(const_env):
    t0 = time.monotonic()
    est = estimate_sigma(const_env, 400, 400_000, seed=0)
    SETUP_SECONDS["whitening"] = time.monotonic() - t0
    return build_whitening(est.matrix)


def endpoint_tv(sample, table) -> float:
    exact = table.probabilities()
    seen, counts = np.unique(sample.paths[:, -1, :], axis=0,
                             return_counts=True)
    tv = sum(exact.values())
    for cell, count in zip(seen, counts):
        p = exact.get(tuple(int(v) for v in cell), 0.0)
        tv += abs(count / sample.count - p) - p
    return 0.5 * tv


def test_criterion_1_rejection_matches_exact_conditioned_law(const_env,
                                                             iid_env):
    t0 = time.monotonic()
    gaps = {}
    for label, env in (("constant", const_env), ("iid", iid_env)):
        sample = rejection_sample(env, 12, 100_000, seed=0)
        gaps[label] = endpoint_tv(sample, exact_conditioned_endpoint(env, 12))
    elapsed = time.monotonic() - t0
    ok = all(v < 0.02 for v in gaps.values()) and elapsed < 120.0
    detail = (f"endpoint TV at n=12, 100000 accepted: "
              f"constant={gaps['constant']:.5f} iid={gaps['iid']:.5f} "
              f"(tolerance 0.02, {elapsed:.1f}s)")
    assert record(1, ok, detail)


def test_criterion_2_meander_density_identities():
    t0 = time.monotonic()
    norm_gap = 0.0
    for t in (0.1, 0.25, 0.5, 0.75, 1.0):
        mass, _ = quad(lambda u: meander_density_from_origin(t, u),
                       0.0, 8.0 * np.sqrt(t), limit=200, epsabs=1e-12)
        norm_gap = max(norm_gap, abs(mass - 1.0))
    ck_gap = 0.0
    for t1 in (0.2, 0.4, 0.6):
        for t2 in (0.65, 0.8, 1.0):
            for y in (0.3, 0.8, 1.5):
                left = meander_density_from_origin(t2, y)
                right, _ = quad(
                    lambda x: meander_density_from_origin(t1, x)
                    * g_kernel(t2 - t1, x, y),
                    0.0, 8.0 * np.sqrt(t1), limit=200, epsabs=1e-12)
                ck_gap = max(ck_gap, abs(left - right))
    elapsed = time.monotonic() - t0
    ok = norm_gap <= 1e-8 and ck_gap <= 1e-6 and elapsed < 30.0
    detail = (f"normalization gap {norm_gap:.2e} (tol 1e-08), "
              f"Chapman-Kolmogorov gap {ck_gap:.2e} over 27 points "
              f"(tol 1e-06, {elapsed:.1f}s)")
    assert record(2, ok, detail)


def test_criterion_3_limit_law_of_conditioned_endpoint(const_env,
                                                       accepted_400,
                                                       whitening_400):
    t0 = time.monotonic()
    rep = main_theorem_check(const_env, 400, samples=accepted_400,
                             whitening=whitening_400)
    elapsed = (time.monotonic() - t0 + SETUP_SECONDS["samples"]
               + SETUP_SECONDS["whitening"])
    by_name = {r.name: r for r in rep.results}
    detail = (f"n=400, 20000 accepted: "
              f"meander KS p={by_name['ks_meander'].statistic:.4f}, "
              f"transverse KS p={by_name['ks_transverse'].statistic:.4f} "
              f"(min 0.01), |corr|={by_name['independence'].statistic:.4f} "
              f"(max 0.03, {elapsed:.1f}s)")
    assert record(3, rep.passed and elapsed < 900.0, detail)


def test_criterion_4_joint_box_matches_quadrature(const_env, accepted_400,
                                                  whitening_400):
    t0 = time.monotonic()
    query = FddQuery(times=(0.5,), uppers=(1.0,), boxes=(((-0.5, 0.5),),))
    rep = fdd_check(const_env, 400, query, samples=accepted_400,
                    whitening=whitening_400)
    elapsed = time.monotonic() - t0
    gap = rep.results[0]
    detail = (f"box frequency at t=0.5 vs quadrature: gap {gap.statistic:.5f}"
              f" <= 3 stderr {gap.threshold:.5f} ({elapsed:.1f}s)")
    assert record(4, rep.passed, detail)


def test_criterion_5_survival_scaling(const_env):
    t0 = time.monotonic()
    ratio = survival_ratio_check(const_env, 64, 0.25)
    slope, _ = survival_slope(const_env, (16, 32, 64, 128))
    elapsed = time.monotonic() - t0
    ok = (ratio.relative_error < 0.15 and -0.65 <= slope <= -0.35
          and elapsed < 300.0)
    detail = (f"P[survive 16]/P[survive 64]={ratio.ratio:.4f} vs 2.0 "
              f"(rel err {ratio.relative_error:.3f} < 0.15), log-log slope "
              f"{slope:.3f} in [-0.65, -0.35] ({elapsed:.1f}s)")
    assert record(5, ok, detail)


def test_criterion_6_heatkernel_envelopes(const_env, iid_env):
    t0 = time.monotonic()
    reps = {"constant": heatkernel_envelope(const_env),
            "iid": heatkernel_envelope(iid_env)}
    elapsed = time.monotonic() - t0
    ok = all(r.passed for r in reps.values()) and elapsed < 300.0
    states = ", ".join(f"{k}={'ok' if r.passed else 'violated'}"
                       for k, r in reps.items())
    detail = (f"gaussian envelopes with negative log-slope and zero "
              f"off-parity mass at n=20,40,60: {states} ({elapsed:.1f}s)")
    assert record(6, ok, detail)


def test_criterion_7_modulus_tightness(const_env, whitening_400):
    t0 = time.monotonic()
    rep = tightness_check(const_env, 400, (0.2, 0.1, 0.05), sample_count=500,
                          seed=0, whitening=whitening_400)
    elapsed = time.monotonic() - t0
    table = rep.tables["tightness"][1]
    probs = ", ".join(f"delta={row[1]:g}: {row[2]:.3f}" for row in table)
    detail = (f"modulus exceedance decreases and matches the product "
              f"reference ({probs}) at n=400, 500 samples ({elapsed:.1f}s)")
    assert record(7, rep.passed, detail)


def test_criterion_8_functional_clt_from_spread_starts(iid_env):
    t0 = time.monotonic()
    rep = uclt_check(iid_env, seed=0)
    elapsed = time.monotonic() - t0
    dev = {int(row[0]): float(row[5]) for row in
           rep.tables["uclt_deviations"][1] if row[1] == "sup_functional"}
    detail = (f"max deviation of P[sup <= 1] over 9 starts: "
              f"n=400: {dev.get(400, float('nan')):.4f} -> "
              f"n=1600: {dev.get(1600, float('nan')):.4f} ({elapsed:.1f}s)")
    assert record(8, rep.passed, detail)


def test_criterion_9_lemma_probes(const_env, accepted_400):
    t0 = time.monotonic()
    reps = {
        "strip_exit": lemma_probe(const_env, "strip_exit"),
        "ball_exit": lemma_probe(const_env, "ball_exit"),
        "level_competition": lemma_probe(const_env, "level_competition"),
        "slow_ascent": lemma_probe(const_env, "slow_ascent",
                                   samples=accepted_400),
        "transverse_spread": lemma_probe(const_env, "transverse_spread",
                                         samples=accepted_400),
    }
    elapsed = time.monotonic() - t0
    ok = all(r.passed for r in reps.values())
    states = ", ".join(f"{k}={'ok' if r.passed else 'violated'}"
                       for k, r in reps.items())
    assert record(9, ok, f"{states} ({elapsed:.1f}s)")


def test_criterion_10_ks_null_calibration():
    t0 = time.monotonic()
    rep = null_calibration()
    elapsed = time.monotonic() - t0
    worst = max(r.statistic for r in rep.results)
    detail = (f"KS rejections at level 0.01 over 100 seeds per reference: "
              f"worst count {worst:.0f} <= 2 ({elapsed:.1f}s)")
    assert record(10, rep.passed, detail)
