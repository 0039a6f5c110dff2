"""One-call analysis: point estimate, variance, SE and Wald CI per estimator."""
from __future__ import annotations

import math
from typing import Iterable

from .data import TrialDataset
from .errors import ValidationError
from .estimators import (
    KINDS,
    EstimateReport,
    resolve_grams,
    sample_grams,
    tau_adjusted,
    tau_ols,
    tau_unadjusted,
)
from .gram import DEFAULT_RCOND
from .variance import sigma2_baseline_hat, sigma2_hat, wald_ci


def _finish(rep: EstimateReport, sigma2: float, alpha: float) -> EstimateReport:
    lo, hi, clamped = wald_ci(rep.tau_hat, sigma2, rep.n, alpha)
    rep.sigma2_hat = float(sigma2)
    rep.se = math.sqrt(max(sigma2, 1e-12) / rep.n)
    rep.ci = (lo, hi)
    rep.alpha = alpha
    rep.clamped = clamped
    return rep


def analyze(
    dataset: TrialDataset,
    kinds: Iterable[str] = ("unadjusted", "ols", "feasible"),
    alpha: float = 0.05,
    rcond: float = DEFAULT_RCOND,
    oracle_grams=None,
    gram_scope: str = "stratum",
) -> list[EstimateReport]:
    """Estimate every requested kind, in the order given.

    ``gram_scope`` selects stratum-wise or pooled sample Grams for the
    ``ols`` and ``feasible`` kinds; ``oracle`` always uses ``oracle_grams``.
    """
    kinds = list(kinds)
    if not kinds:
        raise ValidationError("at least one estimator kind is required")
    for k in kinds:
        if k not in KINDS:
            raise ValidationError(f"unknown estimator {k!r}; choose from {', '.join(KINDS)}")
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    grams = None
    if "ols" in kinds or "feasible" in kinds:
        grams = sample_grams(dataset, rcond, gram_scope)
    reports = []
    for kind in kinds:
        if kind == "unadjusted":
            rep = tau_unadjusted(dataset)
            _finish(rep, sigma2_baseline_hat(dataset, "unadjusted"), alpha)
        elif kind == "ols":
            rep = tau_ols(dataset, rcond, grams=grams)
            _finish(rep, sigma2_baseline_hat(dataset, "ols", grams=grams), alpha)
        else:
            if kind == "oracle":
                if oracle_grams is None:
                    raise ValidationError("the oracle estimator needs population Gram matrices")
                use = resolve_grams(dataset, oracle_grams)
            else:
                use = grams
            rep = tau_adjusted(dataset, "feasible", oracle_grams=use)
            rep.kind = kind
            vc = sigma2_hat(dataset, "feasible", oracle_grams=use)
            vc.mode = kind
            rep.variance_components = vc.summary()
            _finish(rep, vc.sigma2, alpha)
        reports.append(rep)
    return reports
