"""Deterministic Monte Carlo harness.

Replicate ``r`` draws every random quantity from streams derived from
``SeedSequence(master_seed, spawn_key=(r, purpose))``, so results do not
depend on how replicates are distributed over worker processes. BLAS is
pinned to one thread while a replicate runs, which keeps floating-point
reductions identical between serial and parallel runs.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from ..analysis import analyze
from ..errors import CaradjError, ValidationError
from ..estimators import KINDS, ols_bias_diagnostic
from ..variance import normal_quantile
from .dgp import DGPConfig, generate, true_gram, true_tau_with_se


class ReplicateError(CaradjError, RuntimeError):
    def __init__(self, replicate: int, cause: BaseException):
        super().__init__(f"replicate {replicate} failed: {type(cause).__name__}: {cause}")
        self.replicate = replicate
        self.cause = cause


@dataclass
class KindMetrics:
    bias: float
    signed_bias: float
    mean: float
    sd: float
    mean_se: float
    sd_se: float
    cp: float
    mc_cp: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MCResult:
    config: DGPConfig
    kinds: tuple
    R: int
    master_seed: int
    true_tau: float
    true_tau_se: float
    alpha: float
    metrics: dict[str, KindMetrics]
    table: dict[str, np.ndarray] = field(repr=False)
    wall_time: float = 0.0


FIELDS = ("tau_hat", "se", "sigma2", "ci_lo", "ci_hi", "pseudo", "clamped")


def summarize_metrics(table: Mapping[str, Sequence[float]], tau: float, alpha: float = 0.05) -> KindMetrics:
    """Bias, Monte Carlo SD, sd/se and coverage for one estimator.

    ``table`` holds per-replicate ``tau_hat`` and ``se`` and optionally
    ``ci_lo``/``ci_hi``; without the latter the Wald interval is rebuilt
    from ``se``.
    """
    est = np.asarray(table["tau_hat"], dtype=np.float64)
    se = np.asarray(table["se"], dtype=np.float64)
    if est.size < 2:
        raise ValidationError("need at least 2 replicates to summarize")
    z = normal_quantile(1.0 - alpha / 2.0)
    if "ci_lo" in table and "ci_hi" in table:
        lo = np.asarray(table["ci_lo"], dtype=np.float64)
        hi = np.asarray(table["ci_hi"], dtype=np.float64)
    else:
        lo, hi = est - z * se, est + z * se
    mean = math.fsum(est) / est.size
    sd = float(np.std(est, ddof=1))
    mean_se = math.fsum(se) / se.size
    return KindMetrics(
        bias=abs(mean - tau),
        signed_bias=mean - tau,
        mean=mean,
        sd=sd,
        mean_se=mean_se,
        sd_se=sd / mean_se if mean_se > 0 else math.inf,
        cp=float(np.mean((lo <= tau) & (tau <= hi))),
        mc_cp=float(np.mean(np.abs(est - tau) <= z * sd)),
    )


def replicate_seed(master_seed: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(r,))


def run_replicate(
    config: DGPConfig,
    kinds: Sequence[str],
    master_seed: int,
    r: int,
    alpha: float = 0.05,
    gram_scope: str = "stratum",
) -> dict:
    """One replicate: generate, estimate, and return a flat row of numbers."""
    rep = generate(config, replicate_seed(master_seed, r))
    ds = rep.dataset
    A = ds.assignments
    if not np.array_equal(ds.outcomes, A * rep.y1 + (1 - A) * rep.y0):
        raise AssertionError("observed outcomes violate Y = A Y(1) + (1 - A) Y(0)")
    oracle = true_gram(config) if ("oracle" in kinds or "ols" in kinds) else None
    reports = analyze(
        ds, kinds, alpha=alpha, oracle_grams=oracle if "oracle" in kinds else None,
        gram_scope=gram_scope,
    )
    row = {"ite_mean": float(np.mean(rep.y1 - rep.y0))}
    for rp in reports:
        k = rp.kind
        row[f"{k}.tau_hat"] = rp.tau_hat
        row[f"{k}.se"] = rp.se
        row[f"{k}.sigma2"] = rp.sigma2_hat
        row[f"{k}.ci_lo"] = rp.ci[0]
        row[f"{k}.ci_hi"] = rp.ci[1]
        row[f"{k}.pseudo"] = float(rp.pseudo_inverse)
        row[f"{k}.clamped"] = float(rp.clamped)
        if k in ("oracle", "feasible"):
            row[f"{k}.zeta2_II"] = rp.variance_components["zeta2_II"]
            row[f"{k}.zeta2_H"] = rp.variance_components["zeta2_H"]
        if k == "ols":
            row["ols.diag_bias"] = rp.diag_bias
            row["ols.diag_bias_oracle"] = ols_bias_diagnostic(ds, oracle)
    return row


def _run_chunk(args) -> list[dict]:
    config, kinds, master_seed, indices, alpha, gram_scope = args
    rows = []
    with threadpool_limits(1):
        for r in indices:
            try:
                rows.append(run_replicate(config, kinds, master_seed, r, alpha, gram_scope))
            except Exception as exc:  # noqa: BLE001 - re-raised with the replicate index
                raise ReplicateError(r, exc) from exc
    return rows


def run_monte_carlo(
    config: DGPConfig,
    kinds: Sequence[str] = KINDS,
    R: int = 2000,
    master_seed: int = 0,
    workers: int = 1,
    alpha: float = 0.05,
    gram_scope: str = "stratum",
    progress=None,
) -> MCResult:
    """Run ``R`` replicates of ``config`` and aggregate the metrics.

    ``progress``, if given, is called with the number of finished
    replicates after each chunk.
    """
    kinds = tuple(kinds)
    for k in kinds:
        if k not in KINDS:
            raise ValidationError(f"unknown estimator {k!r}")
    if R < 2:
        raise ValidationError("R must be at least 2")
    if workers < 1:
        raise ValidationError("workers must be at least 1")
    start = time.perf_counter()
    tau, tau_se = true_tau_with_se(config)

    chunk = max(1, min(50, math.ceil(R / (4 * workers))))
    jobs = [
        (config, kinds, master_seed, range(i, min(i + chunk, R)), alpha, gram_scope)
        for i in range(0, R, chunk)
    ]
    rows: list[dict] = []
    if workers == 1:
        for job in jobs:
            rows.extend(_run_chunk(job))
            if progress:
                progress(len(rows))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, jobs):
                rows.extend(part)
                if progress:
                    progress(len(rows))

    table = {key: np.array([row[key] for row in rows]) for key in rows[0]}
    metrics = {}
    for k in kinds:
        sub = {f: table[f"{k}.{f}"] for f in ("tau_hat", "se", "ci_lo", "ci_hi")}
        metrics[k] = summarize_metrics(sub, tau, alpha)
    return MCResult(
        config=config,
        kinds=kinds,
        R=R,
        master_seed=master_seed,
        true_tau=tau,
        true_tau_se=tau_se,
        alpha=alpha,
        metrics=metrics,
        table=table,
        wall_time=time.perf_counter() - start,
    )
