"""Point estimators of the average treatment effect under stratified designs.

Four kinds are provided:

* ``unadjusted`` -- stratified difference in means;
* ``ols`` -- regression-adjusted estimator with interacted linear working model;
* ``oracle`` -- U-statistic bias-corrected estimator using known Gram inverses;
* ``feasible`` -- the same estimator with sample Gram inverses plugged in.

The adjusted estimators remove the diagonal ``i == j`` terms that make the
OLS adjustment a V-statistic, so the adjustment has (near) zero mean even
when ``p`` grows with ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import StratumData, TrialDataset
from .errors import DegenerateStratumError, ValidationError
from .gram import (
    DEFAULT_RCOND,
    GramPair,
    bilinear_offdiag_sum,
    invert_or_pseudo,
    quadratic_diagonal,
    sample_gram,
)

KINDS = ("unadjusted", "ols", "oracle", "feasible")
GRAM_SCOPES = ("stratum", "pooled")


@dataclass
class StratumContribution:
    label: object
    p_n: float
    pi_n: float
    n: int
    n1: int
    n0: int
    contribution: float


@dataclass
class EstimateReport:
    kind: str
    tau_hat: float
    n: int
    contributions: list[StratumContribution]
    sigma2_hat: float = math.nan
    se: float = math.nan
    ci: tuple[float, float] = (math.nan, math.nan)
    alpha: float = 0.05
    pseudo_inverse: bool = False
    clamped: bool = False
    diag_bias: float | None = None
    variance_components: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimator": self.kind,
            "tau_hat": self.tau_hat,
            "sigma2_hat": self.sigma2_hat,
            "se": self.se,
            "ci": list(self.ci),
            "alpha": self.alpha,
            "n": self.n,
            "diagnostics": {
                "pseudo_inverse_used": self.pseudo_inverse,
                "variance_clamped": self.clamped,
                "diag_bias": self.diag_bias,
            },
            "variance_components": dict(self.variance_components),
            "strata": [
                {
                    "label": c.label if isinstance(c.label, (int, str)) else str(c.label),
                    "n": c.n,
                    "n1": c.n1,
                    "n0": c.n0,
                    "p_n": c.p_n,
                    "pi_n": c.pi_n,
                    "contribution": c.contribution,
                }
                for c in self.contributions
            ],
        }


def _weighted_total(contribs: Sequence[StratumContribution]) -> float:
    # fixed stratum order, compensated summation
    return math.fsum(c.p_n * c.contribution for c in contribs)


def _contribution(sd: StratumData, value: float) -> StratumContribution:
    return StratumContribution(sd.label, sd.p_n, sd.pi_n, sd.n, sd.n1, sd.n0, float(value))


# --- Gram plumbing -------------------------------------------------------


def sample_grams(
    dataset: TrialDataset, rcond: float = DEFAULT_RCOND, scope: str = "stratum"
) -> list[GramPair]:
    """Sample Gram (pseudo-)inverses, one per stratum.

    ``scope="stratum"`` uses each stratum's own rows. ``scope="pooled"``
    uses all n rows for every stratum, which targets the same matrix when
    the covariate distribution does not vary across strata.
    """
    if scope not in GRAM_SCOPES:
        raise ValidationError(f"unknown gram scope {scope!r}; expected one of {GRAM_SCOPES}")
    if dataset.p == 0:
        empty = invert_or_pseudo(np.zeros((0, 0)), rcond)
        return [empty] * dataset.K
    if scope == "pooled":
        g = invert_or_pseudo(sample_gram(dataset.covariates), rcond)
        return [g] * dataset.K
    return [invert_or_pseudo(sample_gram(sd.X), rcond) for sd in dataset.iter_strata()]


def resolve_grams(dataset: TrialDataset, grams) -> list[GramPair]:
    """Accept one GramPair for all strata, a list in label order, or a label mapping."""
    if isinstance(grams, GramPair):
        out = [grams] * dataset.K
    elif isinstance(grams, Mapping):
        try:
            out = [grams[lab] for lab in dataset.labels]
        except KeyError as exc:
            raise ValidationError(f"no Gram matrix supplied for stratum {exc.args[0]!r}") from None
    else:
        out = list(grams)
        if len(out) != dataset.K:
            raise ValidationError(f"expected {dataset.K} Gram matrices, got {len(out)}")
    for g in out:
        if g.p != dataset.p:
            raise ValidationError(f"Gram matrix is {g.p} x {g.p} but the data have p = {dataset.p}")
    return out


# --- unadjusted ----------------------------------------------------------


def tau_unadjusted(dataset: TrialDataset) -> EstimateReport:
    contribs = []
    for sd in dataset.iter_strata():
        sd.require_both_arms()
        contribs.append(_contribution(sd, sd.arm_mean(1) - sd.arm_mean(0)))
    return EstimateReport("unadjusted", _weighted_total(contribs), dataset.n, contribs)


# --- OLS -----------------------------------------------------------------


def ols_coefficients(sd: StratumData, gram: GramPair) -> tuple[np.ndarray, np.ndarray]:
    """Arm-wise projection coefficients ``Ginv (1/n_a) sum_{A_i=a} x_i Y_i``."""
    sd.require_both_arms()
    M = gram.inverse
    b1 = M @ (sd.X.T @ (sd.A * sd.Y)) / sd.n1
    b0 = M @ (sd.X.T @ ((1.0 - sd.A) * sd.Y)) / sd.n0
    return b1, b0


def _ols_contribution(sd: StratumData, gram: GramPair) -> float:
    b1, b0 = ols_coefficients(sd, gram)
    pi = sd.pi_n
    adj1 = ((sd.A - pi) @ (sd.X @ b1)) / sd.n1
    adj0 = ((pi - sd.A) @ (sd.X @ b0)) / sd.n0
    return (sd.arm_mean(1) - adj1) - (sd.arm_mean(0) - adj0)


def ols_diag_bias(sd: StratumData, M: np.ndarray, arm: int = 1) -> float:
    """Diagonal (i == j) part of the OLS adjustment for one arm.

    Treated arm: ``(1 - pi)/n_1^2 sum_i A_i x_i' M x_i Y_i``; the control
    arm mirrors it with ``pi/n_0^2`` and ``1 - A_i``.
    """
    M = np.asarray(M, dtype=np.float64)
    if arm == 1:
        if sd.n1 < 1:
            raise DegenerateStratumError(f"stratum {sd.label!r} has no treated units", sd.label)
        wts, factor = sd.A, (1.0 - sd.pi_n) / sd.n1**2
    elif arm == 0:
        if sd.n0 < 1:
            raise DegenerateStratumError(f"stratum {sd.label!r} has no control units", sd.label)
        wts, factor = 1.0 - sd.A, sd.pi_n / sd.n0**2
    else:
        raise ValidationError("arm must be 0 or 1")
    if sd.X.shape[1] == 0:
        return 0.0
    return float(factor * np.dot(wts * sd.Y, quadratic_diagonal(sd.X, M)))


def ols_bias_diagnostic(dataset: TrialDataset, grams) -> float:
    """``sum_k p_nk (treated diagonal - control diagonal)``.

    The OLS estimator carries approximately minus this quantity as bias.
    """
    grams = resolve_grams(dataset, grams)
    terms = []
    for sd, g in zip(dataset.iter_strata(), grams):
        terms.append(sd.p_n * (ols_diag_bias(sd, g.inverse, 1) - ols_diag_bias(sd, g.inverse, 0)))
    return math.fsum(terms)


def tau_ols(dataset: TrialDataset, rcond: float = DEFAULT_RCOND, grams=None) -> EstimateReport:
    grams = sample_grams(dataset, rcond) if grams is None else resolve_grams(dataset, grams)
    contribs = []
    for sd, g in zip(dataset.iter_strata(), grams):
        sd.require_both_arms()
        contribs.append(_contribution(sd, _ols_contribution(sd, g)))
    rep = EstimateReport("ols", _weighted_total(contribs), dataset.n, contribs)
    rep.pseudo_inverse = any(g.pseudo for g in grams)
    rep.diag_bias = ols_bias_diagnostic(dataset, grams)
    return rep


# --- U-statistic adjustment ----------------------------------------------


def _require_u_stratum(sd: StratumData) -> None:
    if sd.n < 2:
        raise DegenerateStratumError(f"stratum {sd.label!r} has fewer than 2 units", sd.label)
    if sd.n1 == 0 or sd.n0 == 0:
        arm = "treated" if sd.n1 == 0 else "control"
        raise DegenerateStratumError(f"stratum {sd.label!r} has no {arm} units", sd.label)


def u_statistic_pair(sd: StratumData, M: np.ndarray, arm: int) -> float:
    """Second-order U-statistic adjustment for one arm of one stratum.

    Treated arm::

        1/(n(n-1) pi^2) sum_{i != j} (A_i - pi) x_i' M x_j A_j Y_j

    and the control arm uses ``(pi - A_i)``, ``(1 - A_j)`` and ``(1 - pi)^2``.
    ``pi`` is the observed treated fraction of the stratum.
    """
    _require_u_stratum(sd)
    n, pi = sd.n, sd.pi_n
    if arm == 1:
        w, v, scale = sd.A - pi, sd.A * sd.Y, pi**2
    elif arm == 0:
        w, v, scale = pi - sd.A, (1.0 - sd.A) * sd.Y, (1.0 - pi) ** 2
    else:
        raise ValidationError("arm must be 0 or 1")
    return bilinear_offdiag_sum(sd.X, w, v, M) / (n * (n - 1) * scale)


def u_statistic_loo(sd: StratumData, M: np.ndarray, arm: int) -> float:
    """The same U-statistic written with leave-one-out coefficients.

    For each unit ``i`` a coefficient vector is formed from the other
    ``n - 1`` units only, and the adjustment is the average of
    ``(1{A_i = a} - pi_a) x_i' beta^{-i}`` over the arm, with
    ``pi_1 = pi`` and ``pi_0 = 1 - pi``.
    """
    _require_u_stratum(sd)
    n, pi = sd.n, sd.pi_n
    M = np.asarray(M, dtype=np.float64)
    if arm == 1:
        ipw = sd.A / pi
        resid = sd.A - pi
        n_a = sd.n1
    elif arm == 0:
        ipw = (1.0 - sd.A) / (1.0 - pi)
        resid = (1.0 - sd.A) - (1.0 - pi)
        n_a = sd.n0
    else:
        raise ValidationError("arm must be 0 or 1")
    if sd.X.shape[1] == 0:
        return 0.0
    terms = sd.X * (ipw * sd.Y)[:, None]
    total = terms.sum(axis=0)
    betas = ((total[None, :] - terms) @ M.T) / (n - 1)
    return float(np.dot(resid, np.einsum("ij,ij->i", sd.X, betas)) / n_a)


def _adjusted_contribution(sd: StratumData, M: np.ndarray) -> float:
    u1 = u_statistic_pair(sd, M, 1)
    u0 = u_statistic_pair(sd, M, 0)
    return (sd.arm_mean(1) - u1) - (sd.arm_mean(0) - u0)


def tau_adjusted(
    dataset: TrialDataset,
    mode: str = "feasible",
    oracle_grams=None,
    rcond: float = DEFAULT_RCOND,
    gram_scope: str = "stratum",
) -> EstimateReport:
    """U-statistic bias-corrected estimator.

    ``mode="oracle"`` requires ``oracle_grams`` holding the population Gram
    inverses. In ``mode="feasible"`` sample Grams are computed unless
    ``oracle_grams`` is given, in which case those matrices are used as-is.
    """
    if mode == "oracle":
        if oracle_grams is None:
            raise ValidationError("oracle mode requires oracle_grams")
        grams = resolve_grams(dataset, oracle_grams)
    elif mode == "feasible":
        grams = (
            sample_grams(dataset, rcond, gram_scope)
            if oracle_grams is None
            else resolve_grams(dataset, oracle_grams)
        )
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    contribs = []
    for sd, g in zip(dataset.iter_strata(), grams):
        _require_u_stratum(sd)
        contribs.append(_contribution(sd, _adjusted_contribution(sd, g.inverse)))
    rep = EstimateReport(mode, _weighted_total(contribs), dataset.n, contribs)
    rep.pseudo_inverse = any(g.pseudo for g in grams)
    return rep
