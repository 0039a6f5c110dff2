"""Variance estimation and Wald intervals.

The asymptotic variance of ``sqrt(n) (tau_hat - tau)`` for the U-statistic
estimator splits into three parts::

    sigma^2 = zeta2_H + zeta2_I + zeta2_II

``zeta2_H`` is between-stratum heterogeneity, ``zeta2_I`` the residual
sampling variance of the linear projection, and ``zeta2_II`` an O(p/n)
excess contributed by the second-order terms. Each is estimated by sample
means or by U-statistics (off-diagonal pair sums) so that no V-statistic
bias creeps back in.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist

import numpy as np

from .data import StratumData, TrialDataset
from .errors import ValidationError
from .estimators import ols_coefficients, resolve_grams, sample_grams
from .gram import DEFAULT_RCOND, quadratic_diagonal, bilinear_offdiag_sum, squared_kernel_offdiag_sum

EPS = 1e-12


@dataclass
class ZetaI:
    value: float
    sigma2_Y: float
    sigma2_I_eta: float
    sigma_I_eta10: float


@dataclass
class ZetaII:
    value: float
    zeta2_II_Y1: float
    zeta2_II_Y0: float
    zeta2_II_Y10: float
    # per-stratum pieces, in label order
    sigma2_II_Y1_1: list
    sigma2_II_Y1_12: list
    sigma2_II_Y0_1: list
    sigma2_II_Y0_12: list
    sigma2_II_Y10: list


@dataclass
class VarianceComponents:
    zeta2_H: float
    zeta2_I: ZetaI
    zeta2_II: ZetaII
    sigma2: float
    mode: str
    clamped: bool

    @property
    def sigma2_for_ci(self) -> float:
        return max(self.sigma2, EPS)

    def summary(self) -> dict:
        return {
            "zeta2_H": self.zeta2_H,
            "zeta2_I": self.zeta2_I.value,
            "sigma2_Y": self.zeta2_I.sigma2_Y,
            "sigma2_I_eta": self.zeta2_I.sigma2_I_eta,
            "sigma_I_eta10": self.zeta2_I.sigma_I_eta10,
            "zeta2_II": self.zeta2_II.value,
            "zeta2_II_Y1": self.zeta2_II.zeta2_II_Y1,
            "zeta2_II_Y0": self.zeta2_II.zeta2_II_Y0,
            "zeta2_II_Y10": self.zeta2_II.zeta2_II_Y10,
            "sigma2": self.sigma2,
        }


def _zeta_H(weights, diffs) -> float:
    weights = np.asarray(weights)
    diffs = np.asarray(diffs)
    center = math.fsum(weights * diffs)
    return math.fsum(weights * (diffs - center) ** 2)


def zeta_H_hat(dataset: TrialDataset) -> float:
    """Between-stratum heterogeneity of the arm-mean differences."""
    w, m1, m0 = [], [], []
    for sd in dataset.iter_strata():
        sd.require_both_arms()
        w.append(sd.p_n)
        m1.append(sd.arm_mean(1))
        m0.append(sd.arm_mean(0))
    w, m1, m0 = map(np.asarray, (w, m1, m0))
    # centering each arm separately equals centering the difference
    return _zeta_H(w, m1 - m0)


def _arm_var(values: np.ndarray, mask: np.ndarray) -> float:
    v = values[mask]
    return float(np.mean((v - v.mean()) ** 2))


def _sigma2_Y_stratum(sd: StratumData, values: np.ndarray | None = None) -> float:
    vals = sd.Y if values is None else values
    pi = sd.pi_n
    return _arm_var(vals, sd.A == 1) / pi + _arm_var(vals, sd.A == 0) / (1.0 - pi)


def _grams_for(dataset, grams, rcond):
    return sample_grams(dataset, rcond) if grams is None else resolve_grams(dataset, grams)


def zeta_I_hat(dataset: TrialDataset, grams=None, rcond: float = DEFAULT_RCOND) -> ZetaI:
    """``sigma2_Y - sigma2_I_eta - 2 sigma_I_eta10`` with U-statistic eta terms."""
    grams = _grams_for(dataset, grams, rcond)
    sY, seta, s10 = [], [], []
    for sd, g in zip(dataset.iter_strata(), grams):
        sd.require_both_arms(2)
        M, pi, n1, n0 = g.inverse, sd.pi_n, sd.n1, sd.n0
        ay1 = sd.A * sd.Y
        ay0 = (1.0 - sd.A) * sd.Y
        sY.append(sd.p_n * _sigma2_Y_stratum(sd))
        eta11 = bilinear_offdiag_sum(sd.X, ay1, ay1, M) / (n1 * (n1 - 1))
        eta00 = bilinear_offdiag_sum(sd.X, ay0, ay0, M) / (n0 * (n0 - 1))
        seta.append(sd.p_n * ((1.0 - pi) / pi * eta11 + pi / (1.0 - pi) * eta00))
        # A_i (1 - A_i) = 0, so the off-diagonal sum is the full cross sum
        s10.append(sd.p_n * bilinear_offdiag_sum(sd.X, ay1, ay0, M) / (n1 * n0))
    sigma2_Y, sigma2_eta, sigma_10 = math.fsum(sY), math.fsum(seta), math.fsum(s10)
    return ZetaI(sigma2_Y - sigma2_eta - 2.0 * sigma_10, sigma2_Y, sigma2_eta, sigma_10)


def zeta_II_hat(dataset: TrialDataset, grams=None, rcond: float = DEFAULT_RCOND) -> ZetaII:
    """Estimate of the O(p/n) second-order variance excess."""
    grams = _grams_for(dataset, grams, rcond)
    y1_terms, y0_terms, y10_terms = [], [], []
    parts = {k: [] for k in ("y1_1", "y1_12", "y0_1", "y0_12", "y10")}
    for sd, g in zip(dataset.iter_strata(), grams):
        sd.require_both_arms(2)
        M, pi, n1, n0 = g.inverse, sd.pi_n, sd.n1, sd.n0
        ay1 = sd.A * sd.Y
        ay0 = (1.0 - sd.A) * sd.Y
        if sd.X.shape[1]:
            q = quadratic_diagonal(sd.X, M)
        else:
            q = np.zeros(sd.n)
        s1_1 = float(np.dot(sd.A, q * sd.Y**2)) / n1
        s0_1 = float(np.dot(1.0 - sd.A, q * sd.Y**2)) / n0
        s1_12 = squared_kernel_offdiag_sum(sd.X, ay1, ay1, M) / (n1 * (n1 - 1))
        s0_12 = squared_kernel_offdiag_sum(sd.X, ay0, ay0, M) / (n0 * (n0 - 1))
        s10 = squared_kernel_offdiag_sum(sd.X, ay1, ay0, M) / (n1 * n0)
        f = sd.p_n / (sd.n - 1)
        y1_terms.append(f * ((1 - pi) / pi**2 * s1_1 + (1 - pi) ** 2 / pi**2 * s1_12))
        y0_terms.append(f * (pi / (1 - pi) ** 2 * s0_1 + pi**2 / (1 - pi) ** 2 * s0_12))
        y10_terms.append(f * s10)
        for key, val in zip(parts, (s1_1, s1_12, s0_1, s0_12, s10)):
            parts[key].append(val)
    z1, z0, z10 = math.fsum(y1_terms), math.fsum(y0_terms), math.fsum(y10_terms)
    return ZetaII(
        z1 + z0 - 2.0 * z10,
        z1,
        z0,
        z10,
        parts["y1_1"],
        parts["y1_12"],
        parts["y0_1"],
        parts["y0_12"],
        parts["y10"],
    )


def sigma2_hat(
    dataset: TrialDataset,
    mode: str = "feasible",
    oracle_grams=None,
    rcond: float = DEFAULT_RCOND,
    gram_scope: str = "stratum",
) -> VarianceComponents:
    """Variance estimate for the U-statistic estimator.

    In oracle mode the supplied population Gram inverses replace the sample
    ones in every kernel; nothing else changes.
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
    zH = zeta_H_hat(dataset)
    zI = zeta_I_hat(dataset, grams)
    zII = zeta_II_hat(dataset, grams)
    total = zH + zI.value + zII.value
    return VarianceComponents(zH, zI, zII, total, mode, clamped=total < EPS)


def sigma2_baseline_hat(
    dataset: TrialDataset, kind: str = "unadjusted", rcond: float = DEFAULT_RCOND, grams=None
) -> float:
    """Plug-in variance for the unadjusted or OLS estimator.

    Both take the form ``zeta2_H + sum_k p_nk (s1^2/pi + s0^2/(1 - pi))`` with
    arm-wise variances of raw outcomes (unadjusted) or of residuals
    ``Y - x' beta_k`` with ``beta_k = (1 - pi) beta(1) + pi beta(0)`` (OLS).
    """
    if kind not in ("unadjusted", "ols"):
        raise ValidationError(f"unknown baseline kind {kind!r}")
    if kind == "unadjusted":
        vals_per = [None] * dataset.K
    else:
        grams = _grams_for(dataset, grams, rcond)
        vals_per = []
        for sd, g in zip(dataset.iter_strata(), grams):
            b1, b0 = ols_coefficients(sd, g)
            beta = (1.0 - sd.pi_n) * b1 + sd.pi_n * b0
            vals_per.append(sd.Y - sd.X @ beta)
    w, diffs, within = [], [], []
    for sd, vals in zip(dataset.iter_strata(), vals_per):
        sd.require_both_arms()
        v = sd.Y if vals is None else vals
        w.append(sd.p_n)
        diffs.append(v[sd.A == 1].mean() - v[sd.A == 0].mean())
        within.append(sd.p_n * _sigma2_Y_stratum(sd, v))
    return _zeta_H(w, diffs) + math.fsum(within)


def normal_quantile(q: float) -> float:
    return NormalDist().inv_cdf(q)


def wald_ci(tau_hat: float, sigma2: float, n: int, alpha: float = 0.05):
    """``tau_hat +/- z_{1-alpha/2} sqrt(max(sigma2, eps)/n)``.

    Returns ``(lo, hi, clamped)``; ``clamped`` is True when the variance was
    raised to the floor ``eps = 1e-12``.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValidationError(f"alpha must lie in (0, 1], got {alpha}")
    if n < 1:
        raise ValidationError("n must be positive")
    clamped = not (sigma2 >= EPS)
    s2 = EPS if clamped else sigma2
    z = 0.0 if alpha == 1.0 else normal_quantile(1.0 - alpha / 2.0)
    half = z * math.sqrt(s2) / math.sqrt(n)
    return tau_hat - half, tau_hat + half, clamped


def components_dict(vc: VarianceComponents) -> dict:
    return asdict(vc)
