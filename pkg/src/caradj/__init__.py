"""Bias-corrected covariate adjustment for covariate-adaptive randomized trials."""
from .analysis import analyze
from .data import StratumData, StratumSummary, TrialDataset, build_strata, load_csv, save_csv
from .errors import CaradjError, DegenerateStratumError, SingularUpdateError, ValidationError
from .estimators import (
    EstimateReport,
    ols_coefficients,
    ols_diag_bias,
    tau_adjusted,
    tau_ols,
    tau_unadjusted,
    u_statistic_loo,
    u_statistic_pair,
)
from .gram import (
    GramPair,
    bilinear_offdiag_sum,
    invert_or_pseudo,
    rank_one_downdate,
    sample_gram,
    squared_kernel_offdiag_sum,
)
from .randomization import RandomizationScheme, assign, draw_strata
from .variance import (
    VarianceComponents,
    sigma2_baseline_hat,
    sigma2_hat,
    wald_ci,
    zeta_H_hat,
    zeta_I_hat,
    zeta_II_hat,
)

__all__ = [
    "analyze",
    "StratumData",
    "StratumSummary",
    "TrialDataset",
    "build_strata",
    "load_csv",
    "save_csv",
    "CaradjError",
    "DegenerateStratumError",
    "SingularUpdateError",
    "ValidationError",
    "EstimateReport",
    "ols_coefficients",
    "ols_diag_bias",
    "tau_adjusted",
    "tau_ols",
    "tau_unadjusted",
    "u_statistic_loo",
    "u_statistic_pair",
    "GramPair",
    "bilinear_offdiag_sum",
    "invert_or_pseudo",
    "rank_one_downdate",
    "sample_gram",
    "squared_kernel_offdiag_sum",
    "RandomizationScheme",
    "assign",
    "draw_strata",
    "VarianceComponents",
    "sigma2_baseline_hat",
    "sigma2_hat",
    "wald_ci",
    "zeta_H_hat",
    "zeta_I_hat",
    "zeta_II_hat",
]

__version__ = "0.1.0"
