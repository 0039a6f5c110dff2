"""Data-generating processes for the two simulation models.

Covariates ``X0`` are p0-dimensional multivariate t with ``df`` degrees of
freedom and scale matrix ``S`` (AR(rho) or identity), drawn as a Gaussian
scale mixture ``z / sqrt(g/df)`` with ``z ~ N(0, S)``, ``g ~ chi2(df)``.
The adjusted covariates are the first ``p`` columns of ``X0`` or, when
``p > p0``, ``X0`` followed by ``p - p0`` independent univariate t columns.

Model 1 (continuous)::

    Y(0) = B + 2 X0'b0 - 0.5 X0_4^2 + e0
    Y(1) = B + 0.05 X0' S^{-1} X0 + e1

Model 2 (binary)::

    P(Y(0) = 1) = expit(-1 + X0'b0 - 2 X0_1^2)
    P(Y(1) = 1) = expit(-3 + X0'b1 + 2 X0_2^2 + 0.5 X0_3^4)

where ``B`` is the stratum label (1..K).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.special import expit

from ..data import TrialDataset
from ..errors import ValidationError
from ..gram import GramPair, invert_or_pseudo
from ..randomization import RandomizationScheme, assign, draw_strata, fixed_strata

# stream purposes within one replicate
STREAM_STRATA, STREAM_COVARIATES, STREAM_OUTCOMES, STREAM_ASSIGN = range(4)


@dataclass(frozen=True)
class DGPConfig:
    model: int = 1
    n: int = 1000
    p: int | None = None
    ratio: float | None = None
    p0: int = 30
    scale: str = "ar"
    rho: float = 0.1
    df: float = 5.0
    strata_probs: tuple = (0.2, 0.2, 0.3, 0.3)
    strata_sampling: str = "iid"
    noise_sd: float = 0.1
    beta_seed: int = 20240917
    scheme: str = "permuted-block"
    pi: float = 0.5
    block_size: int = 6
    coin_bias: float = 2.0 / 3.0
    # outcome-model coefficients; defaults reproduce the two models, tests
    # switch terms off through them
    linear_coef: float = 2.0
    quad_coef: float = -0.5
    mahal_coef: float = 0.05
    m2_intercept0: float = -1.0
    m2_intercept1: float = -3.0
    m2_beta0: float = 1.5
    m2_beta1: float = 0.5

    def __post_init__(self):
        if self.model not in (1, 2):
            raise ValidationError(f"model must be 1 or 2, got {self.model}")
        if self.p is None and self.ratio is None:
            raise ValidationError("set either p or ratio")
        if self.p is not None and self.ratio is not None:
            raise ValidationError("set only one of p and ratio")
        if self.dim < 0:
            raise ValidationError("p must be non-negative")
        probs = np.asarray(self.strata_probs, dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValidationError("strata_probs must form a simplex")
        if self.n < 2 * len(self.strata_probs):
            raise ValidationError("n must be at least 2K")
        if not self.df > 2:
            raise ValidationError("df must exceed 2 for a finite covariance")
        if self.scale not in ("ar", "identity"):
            raise ValidationError(f"scale must be 'ar' or 'identity', got {self.scale!r}")
        if self.strata_sampling not in ("iid", "fixed"):
            raise ValidationError("strata_sampling must be 'iid' or 'fixed'")
        if self.p0 < 4:
            raise ValidationError("p0 must be at least 4 (the outcome models use X0_1..X0_4)")
        self.randomization()  # validates scheme parameters

    @property
    def dim(self) -> int:
        """Number of adjusted covariates."""
        if self.p is not None:
            return int(self.p)
        return int(math.ceil(self.ratio * self.n - 1e-9))

    @property
    def K(self) -> int:
        return len(self.strata_probs)

    def scale_matrix(self) -> np.ndarray:
        idx = np.arange(self.p0)
        if self.scale == "identity":
            return np.eye(self.p0)
        return self.rho ** np.abs(idx[:, None] - idx[None, :])

    def randomization(self) -> RandomizationScheme:
        return RandomizationScheme(self.scheme, self.pi, self.block_size, self.coin_bias)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strata_probs"] = list(self.strata_probs)
        d["dim"] = self.dim
        return d


@dataclass
class SimReplicate:
    dataset: TrialDataset
    y0: np.ndarray
    y1: np.ndarray
    strata: np.ndarray


@lru_cache(maxsize=64)
def _scale_factors(p0: int, scale: str, rho: float):
    cfg_idx = np.arange(p0)
    S = np.eye(p0) if scale == "identity" else rho ** np.abs(cfg_idx[:, None] - cfg_idx[None, :])
    L = np.linalg.cholesky(S)
    Sinv = np.linalg.inv(S)
    S.setflags(write=False)
    L.setflags(write=False)
    Sinv.setflags(write=False)
    return S, L, Sinv


def model1_beta(config: DGPConfig) -> np.ndarray:
    """Unit-norm coefficient vector drawn once per scenario from ``beta_seed``."""
    rng = np.random.default_rng(config.beta_seed)
    b = rng.uniform(-1.0, 1.0, size=config.p0)
    return b / np.linalg.norm(b)


def sample_t(rng, n: int, L: np.ndarray, df: float) -> np.ndarray:
    z = rng.standard_normal((n, L.shape[0])) @ L.T
    g = rng.chisquare(df, size=n)
    return z / np.sqrt(g / df)[:, None]


def _stream(seed_seq: np.random.SeedSequence, purpose: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed_seq.entropy, spawn_key=(*seed_seq.spawn_key, purpose))
    )


def _potential_outcomes(config: DGPConfig, X0: np.ndarray, B: np.ndarray, rng):
    n = X0.shape[0]
    S, L, Sinv = _scale_factors(config.p0, config.scale, config.rho)
    if config.model == 1:
        beta0 = model1_beta(config)
        e0 = rng.standard_normal(n) * config.noise_sd
        e1 = rng.standard_normal(n) * config.noise_sd
        mahal = np.einsum("ij,jk,ik->i", X0, Sinv, X0)
        y0 = B + config.linear_coef * (X0 @ beta0) + config.quad_coef * X0[:, 3] ** 2 + e0
        y1 = B + config.mahal_coef * mahal + e1
        return y0, y1
    lin0 = config.m2_intercept0 + config.m2_beta0 * X0.sum(axis=1) - 2.0 * X0[:, 0] ** 2
    lin1 = (
        config.m2_intercept1
        + config.m2_beta1 * X0.sum(axis=1)
        + 2.0 * X0[:, 1] ** 2
        + 0.5 * X0[:, 2] ** 4
    )
    u = rng.random((n, 2))
    y0 = (u[:, 0] < expit(lin0)).astype(np.float64)
    y1 = (u[:, 1] < expit(lin1)).astype(np.float64)
    return y0, y1


def _generate(config: DGPConfig, seed_seq: np.random.SeedSequence) -> SimReplicate:
    n, p, p0 = config.n, config.dim, config.p0
    sampler = draw_strata if config.strata_sampling == "iid" else fixed_strata
    B = sampler(config.strata_probs, n, _stream(seed_seq, STREAM_STRATA))
    rng_x = _stream(seed_seq, STREAM_COVARIATES)
    _, L, _ = _scale_factors(p0, config.scale, config.rho)
    X0 = sample_t(rng_x, n, L, config.df)
    if p <= p0:
        X2 = X0[:, :p]
    else:
        Z = rng_x.standard_t(config.df, size=(n, p - p0))
        X2 = np.hstack([X0, Z])
    y0, y1 = _potential_outcomes(config, X0, B.astype(np.float64), _stream(seed_seq, STREAM_OUTCOMES))
    A = assign(config.randomization(), B, _stream(seed_seq, STREAM_ASSIGN))
    Y = np.where(A == 1, y1, y0)
    ds = TrialDataset(outcomes=Y, assignments=A, strata=B, covariates=X2)
    return SimReplicate(ds, y0, y1, B)


def _as_seedseq(rng_seed) -> np.random.SeedSequence:
    if isinstance(rng_seed, np.random.SeedSequence):
        return rng_seed
    return np.random.SeedSequence(rng_seed)


def gen_model1(config: DGPConfig, rng_seed) -> SimReplicate:
    if config.model != 1:
        raise ValidationError("gen_model1 needs a model-1 config")
    return _generate(config, _as_seedseq(rng_seed))


def gen_model2(config: DGPConfig, rng_seed) -> SimReplicate:
    if config.model != 2:
        raise ValidationError("gen_model2 needs a model-2 config")
    return _generate(config, _as_seedseq(rng_seed))


def generate(config: DGPConfig, rng_seed) -> SimReplicate:
    return _generate(config, _as_seedseq(rng_seed))


# --- truths --------------------------------------------------------------


def t_variance_factor(df: float) -> float:
    return df / (df - 2.0)


def _model1_tau(config: DGPConfig) -> float:
    S = config.scale_matrix()
    c = t_variance_factor(config.df)
    # E[X0' S^{-1} X0] = c p0 and E[X0_4^2] = c S_44; the stratum term cancels
    return config.mahal_coef * c * config.p0 - config.quad_coef * c * S[3, 3]


TRUTH_DRAWS = 10_000_000
TRUTH_CHUNK = 500_000


def model2_tau_mc(config: DGPConfig, seed: int = 0, draws: int = TRUTH_DRAWS) -> tuple[float, float]:
    """Monte Carlo ATE for Model 2 and its standard error.

    Averages ``expit(lin1) - expit(lin0)`` over covariate draws, which has
    the same mean as ``Y(1) - Y(0)`` and a smaller variance.
    """
    _, L, _ = _scale_factors(config.p0, config.scale, config.rho)
    rng = np.random.default_rng(seed)
    total, total_sq, done = 0.0, 0.0, 0
    while done < draws:
        m = min(TRUTH_CHUNK, draws - done)
        X0 = sample_t(rng, m, L, config.df)
        s = X0.sum(axis=1)
        lin0 = config.m2_intercept0 + config.m2_beta0 * s - 2.0 * X0[:, 0] ** 2
        lin1 = config.m2_intercept1 + config.m2_beta1 * s + 2.0 * X0[:, 1] ** 2 + 0.5 * X0[:, 2] ** 4
        d = expit(lin1) - expit(lin0)
        total += math.fsum(d)
        total_sq += math.fsum(d * d)
        done += m
    mean = total / draws
    var = max(total_sq / draws - mean**2, 0.0) * draws / (draws - 1)
    return mean, math.sqrt(var / draws)


def _truth_key(config: DGPConfig) -> str:
    fields = ("p0", "scale", "rho", "df", "m2_intercept0", "m2_intercept1", "m2_beta0", "m2_beta1")
    return json.dumps({f: getattr(config, f) for f in fields}, sort_keys=True)


def _bundled_truths() -> dict:
    try:
        text = resources.files("caradj.sim").joinpath("truths.json").read_text()
    except FileNotFoundError:
        return {}
    return {json.dumps(e["key"], sort_keys=True): e for e in json.loads(text)["model2"]}


_truth_cache: dict[str, tuple[float, float]] = {}


def true_tau_with_se(config: DGPConfig) -> tuple[float, float]:
    """ATE of the configured model and the standard error of that value.

    Model 1 is exact (standard error 0). Model 2 uses a bundled Monte Carlo
    value when the outcome-relevant settings match, otherwise computes one.
    """
    if config.model == 1:
        return _model1_tau(config), 0.0
    key = _truth_key(config)
    if key not in _truth_cache:
        bundled = _bundled_truths().get(key)
        if bundled is not None:
            _truth_cache[key] = (bundled["tau"], bundled["se"])
        else:
            _truth_cache[key] = model2_tau_mc(config)
    return _truth_cache[key]


def true_tau(config: DGPConfig) -> float:
    return true_tau_with_se(config)[0]


def true_gram(config: DGPConfig, k=None) -> GramPair:
    """Population Gram matrix of the adjusted covariates (identical across strata)."""
    c = t_variance_factor(config.df)
    p, p0 = config.dim, config.p0
    S = config.scale_matrix()
    G = np.zeros((p, p))
    q = min(p, p0)
    G[:q, :q] = c * S[:q, :q]
    if p > p0:
        G[p0:, p0:] = c * np.eye(p - p0)
    pair = invert_or_pseudo(G)
    return replace(pair, mode="oracle")
