import math
from dataclasses import replace

import numpy as np
import pytest

from caradj.errors import ValidationError
from caradj.sim.dgp import (
    DGPConfig,
    gen_model1,
    gen_model2,
    generate,
    model2_tau_mc,
    sample_t,
    true_gram,
    true_tau,
    true_tau_with_se,
)
from caradj.sim.montecarlo import run_monte_carlo, run_replicate, summarize_metrics


def test_model1_degenerate_coefficients_give_stratum_label():
    cfg = DGPConfig(model=1, n=200, p=3, noise_sd=0.0, linear_coef=0.0, quad_coef=0.0)
    rep = gen_model1(cfg, np.random.SeedSequence(1))
    np.testing.assert_array_equal(rep.y0, rep.strata.astype(float))


def test_generation_is_deterministic():
    cfg = DGPConfig(model=1, n=300, ratio=0.1)
    a = generate(cfg, np.random.SeedSequence(5, spawn_key=(3,)))
    b = generate(cfg, np.random.SeedSequence(5, spawn_key=(3,)))
    assert a.dataset.equals(b.dataset)
    assert np.array_equal(a.y1, b.y1)


def test_consistency_identity():
    for model in (1, 2):
        rep = generate(DGPConfig(model=model, n=400, p=40), np.random.SeedSequence(2))
        A = rep.dataset.assignments
        assert np.array_equal(rep.dataset.outcomes, A * rep.y1 + (1 - A) * rep.y0)


def test_assignments_ignore_covariates_and_outcomes():
    base = DGPConfig(model=1, n=300, p=5)
    other = replace(base, mahal_coef=3.0, noise_sd=5.0, beta_seed=1, rho=0.5)
    seed = np.random.SeedSequence(11)
    a = generate(base, seed).dataset
    b = generate(other, seed).dataset
    assert np.array_equal(a.assignments, b.assignments)
    assert not np.array_equal(a.outcomes, b.outcomes)


def test_mahalanobis_moment():
    cfg = DGPConfig(model=1, n=1000, p=30)
    S = cfg.scale_matrix()
    L = np.linalg.cholesky(S)
    X0 = sample_t(np.random.default_rng(3), 1_000_000, L, 5.0)
    m = np.einsum("ij,ij->i", X0 @ np.linalg.inv(S), X0).mean()
    assert abs(m - 50.0) <= 0.5


def test_model2_range_and_monotonicity():
    cfg = DGPConfig(model=2, n=2000, p=30)
    rep = gen_model2(cfg, np.random.SeedSequence(4))
    assert set(np.unique(rep.y0)) <= {0.0, 1.0} and set(np.unique(rep.y1)) <= {0.0, 1.0}
    up = gen_model2(replace(cfg, m2_intercept1=10.0), np.random.SeedSequence(4))
    assert up.y1.mean() > rep.y1.mean()


def test_model2_empirical_ate_matches_truth():
    cfg = DGPConfig(model=2, n=1_000_000, p=1, strata_probs=(1.0,))
    rep = gen_model2(cfg, np.random.SeedSequence(6))
    assert abs((rep.y1 - rep.y0).mean() - true_tau(cfg)) <= 0.005


def test_true_tau_model1():
    assert true_tau(DGPConfig(model=1, n=100, p=5)) == pytest.approx(10 / 3, abs=1e-14)
    assert true_tau(DGPConfig(model=1, n=100, p=5, quad_coef=0.0, mahal_coef=0.0)) == 0.0


def test_true_tau_model1_monte_carlo_crosscheck():
    cfg = DGPConfig(model=1, n=1_000_000, p=1, strata_probs=(1.0,))
    d = generate(cfg, np.random.SeedSequence(7))
    ite = d.y1 - d.y0
    se = ite.std(ddof=1) / math.sqrt(ite.size)
    assert abs(ite.mean() - 10 / 3) <= 3 * se


def test_true_tau_model2_cached_and_replicated():
    cfg = DGPConfig(model=2, n=600, ratio=0.3)
    tau, se = true_tau_with_se(cfg)
    assert tau == pytest.approx(0.13284462403431568, abs=0)
    assert 0 < se <= 2e-4
    tau2, se2 = model2_tau_mc(cfg, seed=777, draws=2_000_000)
    assert abs(tau2 - tau) <= 6 * math.hypot(se, se2)


def test_true_gram_forms():
    g = true_gram(DGPConfig(model=1, n=100, p=30, scale="identity"))
    np.testing.assert_allclose(g.matrix, 5 / 3 * np.eye(30), rtol=0, atol=1e-15)
    assert g.mode == "oracle"
    g = true_gram(DGPConfig(model=1, n=100, p=2))
    np.testing.assert_allclose(g.matrix, 5 / 3 * np.array([[1, 0.1], [0.1, 1]]), atol=1e-15)
    g = true_gram(DGPConfig(model=1, n=200, p=40))
    assert np.all(g.matrix[:30, 30:] == 0) and np.all(g.matrix[30:, :30] == 0)
    np.testing.assert_allclose(np.diag(g.matrix)[30:], 5 / 3)


def test_true_gram_matches_empirical_gram():
    cfg = DGPConfig(model=1, n=1_000_000, p=2, strata_probs=(1.0,))
    X = generate(cfg, np.random.SeedSequence(8)).dataset.covariates
    emp = X.T @ X / X.shape[0]
    assert np.max(np.abs(emp - true_gram(cfg).matrix)) <= 0.01


def test_config_validation():
    with pytest.raises(ValidationError):
        DGPConfig(model=3, p=1)
    with pytest.raises(ValidationError):
        DGPConfig(model=1)
    with pytest.raises(ValidationError):
        DGPConfig(model=1, p=1, ratio=0.1)
    with pytest.raises(ValidationError):
        DGPConfig(model=1, p=1, df=2.0)
    with pytest.raises(ValidationError):
        DGPConfig(model=1, p=1, n=7)
    with pytest.raises(ValidationError):
        DGPConfig(model=1, p=1, strata_probs=(0.5, 0.6))
    assert DGPConfig(model=1, n=600, ratio=0.3).dim == 180


def test_summarize_constant_estimates():
    m = summarize_metrics({"tau_hat": [2.0] * 5, "se": [1.0] * 5}, 2.0)
    assert (m.bias, m.sd, m.cp) == (0.0, 0.0, 1.0)


def test_summarize_two_points():
    m = summarize_metrics({"tau_hat": [0.0, 2.0], "se": [1.0, 1.0]}, 1.0)
    assert m.bias == 0.0
    assert m.sd == pytest.approx(math.sqrt(2), abs=1e-15)
    assert m.sd_se == pytest.approx(math.sqrt(2), abs=1e-15)
    assert m.cp == 1.0 and m.mc_cp == 1.0


def test_summarize_rejects_single_replicate():
    with pytest.raises(ValidationError):
        summarize_metrics({"tau_hat": [1.0], "se": [1.0]}, 1.0)


def test_run_replicate_records_truth_and_metrics():
    cfg = DGPConfig(model=1, n=200, p=5)
    row = run_replicate(cfg, ("unadjusted", "ols", "oracle", "feasible"), 3, 0)
    assert {"oracle.zeta2_II", "ols.diag_bias", "feasible.tau_hat", "ite_mean"} <= set(row)


def test_monte_carlo_worker_invariance():
    cfg = DGPConfig(model=1, n=120, p=4)
    kinds = ("unadjusted", "ols", "oracle", "feasible")
    r1 = run_monte_carlo(cfg, kinds, R=6, master_seed=9, workers=1)
    r4 = run_monte_carlo(cfg, kinds, R=6, master_seed=9, workers=4)
    assert r1.table.keys() == r4.table.keys()
    for k in r1.table:
        assert np.array_equal(r1.table[k], r4.table[k])
    assert r1.metrics == r4.metrics


def test_monte_carlo_validation():
    cfg = DGPConfig(model=1, n=120, p=4)
    with pytest.raises(ValidationError):
        run_monte_carlo(cfg, ("nope",), R=3)
    with pytest.raises(ValidationError):
        run_monte_carlo(cfg, R=1)
    with pytest.raises(ValidationError):
        run_monte_carlo(cfg, R=3, workers=0)


def test_unadjusted_unbiased_model1():
    cfg = DGPConfig(model=1, n=300, p=1)
    res = run_monte_carlo(cfg, ("unadjusted",), R=2000, master_seed=1)
    m = res.metrics["unadjusted"]
    assert m.bias <= 3 * m.sd / math.sqrt(res.R)


def test_ite_mean_tracks_truth():
    # per-replicate mean of Y(1) - Y(0) concentrates around tau as n grows
    cfg_small = DGPConfig(model=1, n=500, p=1)
    cfg_big = DGPConfig(model=1, n=50_000, p=1)
    devs = []
    for cfg in (cfg_small, cfg_big):
        vals = []
        for r in range(20):
            rep = generate(cfg, np.random.SeedSequence(4, spawn_key=(r,)))
            vals.append((rep.y1 - rep.y0).mean())
        devs.append(abs(np.mean(vals) - true_tau(cfg)))
        se = np.std(vals, ddof=1) / math.sqrt(len(vals))
        assert devs[-1] <= 3 * se


@pytest.mark.slow
def test_ols_baseline_variance_consistent_at_small_p():
    cfg = DGPConfig(model=1, n=1600, p=5)
    res = run_monte_carlo(cfg, ("ols",), R=500, master_seed=12)
    target = cfg.n * np.var(res.table["ols.tau_hat"], ddof=1)
    assert abs(np.mean(res.table["ols.sigma2"]) - target) <= 0.15 * target
