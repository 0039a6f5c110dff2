import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import naive
from caradj.analysis import analyze
from caradj.data import dataset_from_arrays
from caradj.errors import ValidationError
from caradj.estimators import sample_grams
from caradj.variance import (
    normal_quantile,
    sigma2_baseline_hat,
    sigma2_hat,
    wald_ci,
    zeta_H_hat,
    zeta_I_hat,
    zeta_II_hat,
)
from test_estimators import random_dataset


def test_zeta_H_identical_means():
    ds = dataset_from_arrays([1, 0, 1, 0], [1, 0, 1, 0], [1, 1, 2, 2])
    assert zeta_H_hat(ds) == 0.0


def test_zeta_H_two_equal_strata():
    ds = dataset_from_arrays([2, 0, 0, 0], [1, 0, 1, 0], [1, 1, 2, 2])
    assert zeta_H_hat(ds) == pytest.approx(1.0, abs=1e-15)


def test_zeta_H_single_stratum():
    ds = dataset_from_arrays([5, 1, 3, 2], [1, 0, 1, 0], [1] * 4)
    assert zeta_H_hat(ds) == 0.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_zeta_H_nonnegative_and_matches_naive(seed):
    rng = np.random.default_rng(seed)
    y, a, s, X = random_dataset(rng, K=int(rng.integers(1, 5)), nmax=10)
    y = y * rng.exponential(10.0)
    v = zeta_H_hat(dataset_from_arrays(y, a, s, X))
    assert v >= 0.0
    assert v == pytest.approx(naive.zeta_H(y, a, s, X), rel=1e-9, abs=1e-12)


def test_zeta_I_zero_outcomes():
    rng = np.random.default_rng(1)
    y, a, s, X = random_dataset(rng, K=2, p=3)
    z = zeta_I_hat(dataset_from_arrays(np.zeros_like(y), a, s, X))
    assert (z.value, z.sigma2_Y, z.sigma2_I_eta, z.sigma_I_eta10) == (0.0, 0.0, 0.0, 0.0)


def test_zeta_I_without_covariates_is_two_sample_variance():
    rng = np.random.default_rng(2)
    y, a, s, _ = random_dataset(rng, K=1, p=1)
    ds = dataset_from_arrays(y, a, s)
    z = zeta_I_hat(ds)
    pi = a.mean()
    ref = np.var(y[a == 1]) / pi + np.var(y[a == 0]) / (1 - pi)
    assert z.value == pytest.approx(ref, rel=1e-12)
    assert z.sigma2_I_eta == 0.0 and z.sigma_I_eta10 == 0.0


def test_zeta_I_matches_naive_single_instance():
    rng = np.random.default_rng(3)
    y, a, s, X = random_dataset(rng, K=1, p=3, n_per=20)
    got = zeta_I_hat(dataset_from_arrays(y, a, s, X))
    ref = naive.zeta_I(y, a, s, X.tolist())
    for g, r in zip((got.value, got.sigma2_Y, got.sigma2_I_eta, got.sigma_I_eta10), ref):
        assert naive.rel_err(g, r) < 1e-10


def test_zeta_II_zero_outcomes_and_zero_kernel():
    rng = np.random.default_rng(4)
    y, a, s, X = random_dataset(rng, K=2, p=3)
    assert zeta_II_hat(dataset_from_arrays(np.zeros_like(y), a, s, X)).value == 0.0
    ds = dataset_from_arrays(y, a, s, X)
    from caradj.gram import invert_or_pseudo

    zero = invert_or_pseudo(np.zeros((3, 3)))
    assert zeta_II_hat(ds, [zero, zero]).value == 0.0


def test_zeta_II_matches_naive_single_instance():
    rng = np.random.default_rng(5)
    y, a, s, X = random_dataset(rng, K=1, p=3, n_per=20)
    got = zeta_II_hat(dataset_from_arrays(y, a, s, X)).value
    assert naive.rel_err(got, naive.zeta_II(y, a, s, X.tolist())) < 1e-10


def test_variance_components_match_naive_many():
    rng = np.random.default_rng(6)
    for _ in range(200):
        y, a, s, X = random_dataset(rng, nmax=12, pmax=3)
        ds = dataset_from_arrays(y, a, s, X)
        zI = zeta_I_hat(ds)
        zII = zeta_II_hat(ds)
        ref_I = naive.zeta_I(y, a, s, X.tolist())
        assert naive.rel_err(zI.sigma2_I_eta, ref_I[2]) < 1e-10
        assert naive.rel_err(zI.sigma_I_eta10, ref_I[3]) < 1e-10
        assert abs(zI.value - ref_I[0]) <= 1e-10 * max(1.0, abs(ref_I[1]))
        assert naive.rel_err(zII.value, naive.zeta_II(y, a, s, X.tolist())) < 1e-9


def test_sigma2_zero_outcomes_clamped():
    rng = np.random.default_rng(7)
    y, a, s, X = random_dataset(rng, K=2, p=2)
    ds = dataset_from_arrays(np.zeros_like(y), a, s, X)
    vc = sigma2_hat(ds)
    assert vc.sigma2 == 0.0 and vc.clamped
    assert vc.sigma2_for_ci == 1e-12


def test_sigma2_p0_single_stratum_reduction():
    rng = np.random.default_rng(8)
    y, a, s, _ = random_dataset(rng, K=1, p=1)
    ds = dataset_from_arrays(y, a, s)
    pi = a.mean()
    ref = np.var(y[a == 1]) / pi + np.var(y[a == 0]) / (1 - pi)
    assert sigma2_hat(ds).sigma2 == pytest.approx(ref, rel=1e-12)


def test_sigma2_feasible_equals_explicit_sample_grams():
    rng = np.random.default_rng(9)
    y, a, s, X = random_dataset(rng, K=3, p=3)
    ds = dataset_from_arrays(y, a, s, X)
    assert sigma2_hat(ds).sigma2 == sigma2_hat(ds, "oracle", oracle_grams=sample_grams(ds)).sigma2
    with pytest.raises(ValidationError):
        sigma2_hat(ds, "oracle")


def test_baseline_variances():
    rng = np.random.default_rng(10)
    y, a, s, X = random_dataset(rng, K=2, p=2)
    zero = dataset_from_arrays(np.zeros_like(y), a, s, X)
    assert sigma2_baseline_hat(zero, "unadjusted") == 0.0
    assert sigma2_baseline_hat(zero, "ols") == 0.0
    nox = dataset_from_arrays(y, a, s)
    assert sigma2_baseline_hat(nox, "ols") == sigma2_baseline_hat(nox, "unadjusted")
    ds = dataset_from_arrays(y, a, s, X)
    assert sigma2_baseline_hat(ds, "unadjusted") == pytest.approx(
        zeta_H_hat(ds) + zeta_I_hat(nox).sigma2_Y, rel=1e-12
    )
    with pytest.raises(ValidationError):
        sigma2_baseline_hat(ds, "feasible")


def test_wald_ci_examples():
    lo, hi, clamped = wald_ci(0.0, 1.0, 100, 0.05)
    assert lo == pytest.approx(-0.1959964, abs=1e-7)
    assert hi == pytest.approx(0.1959964, abs=1e-7)
    assert not clamped
    assert wald_ci(1.5, 2.0, 10, 1.0)[:2] == (1.5, 1.5)
    lo, hi, clamped = wald_ci(0.0, 0.0, 100, 0.05)
    assert clamped and hi - lo == pytest.approx(2 * 1.959963984540054 * 1e-6 / 10, rel=1e-12)
    with pytest.raises(ValidationError):
        wald_ci(0.0, 1.0, 100, 0.0)


def test_normal_quantile_accuracy():
    # reference values of the standard normal quantile
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert normal_quantile(0.995) == pytest.approx(2.5758293035489004, abs=1e-12)
    assert normal_quantile(0.5) == 0.0


def test_analyze_fills_every_report():
    rng = np.random.default_rng(11)
    y, a, s, X = random_dataset(rng, K=2, p=2, n_per=25)
    ds = dataset_from_arrays(y, a, s, X)
    reps = analyze(ds, ["unadjusted", "ols", "feasible"])
    for r in reps:
        assert math.isfinite(r.se) and r.ci[0] < r.tau_hat < r.ci[1]
    assert reps[2].variance_components["sigma2"] == reps[2].sigma2_hat
    with pytest.raises(ValidationError):
        analyze(ds, [])
    with pytest.raises(ValidationError):
        analyze(ds, ["oracle"])
    with pytest.raises(ValidationError):
        analyze(ds, ["feasible"], alpha=1.5)
