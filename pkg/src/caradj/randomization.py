"""Covariate-adaptive treatment assignment within strata.

All schemes read only the stratum labels and a seed, never outcomes or
covariates, so assignments are conditionally independent of potential
outcomes given the strata. Within a stratum, units arrive in row order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import _sort_key
from .errors import ValidationError

VARIANTS = ("simple", "permuted-block", "biased-coin")


@dataclass(frozen=True)
class RandomizationScheme:
    """Assignment design.

    ``pi`` is either one target treated fraction for every stratum or a
    mapping from stratum label to its target.
    """

    variant: str = "permuted-block"
    pi: float | Mapping = 0.5
    block_size: int = 6
    bias: float = 2.0 / 3.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown scheme {self.variant!r}; choose from {VARIANTS}")
        for lab, pi in self._pis():
            if not (0.0 < pi < 1.0):
                raise ValidationError(f"target proportion must be in (0, 1), got {pi} for {lab!r}")
            if self.variant == "permuted-block":
                if self.block_size < 1:
                    raise ValidationError("block size must be positive")
                bt = self.block_size * pi
                if abs(bt - round(bt)) > 1e-9:
                    raise ValidationError(
                        f"block size {self.block_size} incompatible with pi={pi}: "
                        "block_size * pi must be an integer"
                    )
            if self.variant == "biased-coin" and abs(pi - 0.5) > 1e-12:
                raise ValidationError("the biased coin design targets pi = 1/2 in every stratum")
        if self.variant == "biased-coin" and not (0.5 < self.bias <= 1.0):
            raise ValidationError(f"coin bias must lie in (1/2, 1], got {self.bias}")

    def _pis(self):
        if isinstance(self.pi, Mapping):
            return list(self.pi.items())
        return [(None, float(self.pi))]

    def target(self, label) -> float:
        if isinstance(self.pi, Mapping):
            try:
                return float(self.pi[label])
            except KeyError:
                raise ValidationError(f"no target proportion for stratum {label!r}") from None
        return float(self.pi)


def draw_strata(probs, n: int, seed) -> np.ndarray:
    """i.i.d. categorical stratum labels ``1..K``."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise ValidationError("stratum probabilities must form a simplex")
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return rng.choice(probs.size, size=n, p=probs / probs.sum()) + 1


def fixed_strata(probs, n: int, seed) -> np.ndarray:
    """Labels ``1..K`` with counts ``round(n p_k)`` (largest remainder), shuffled."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise ValidationError("stratum probabilities must form a simplex")
    raw = probs * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    labels = np.repeat(np.arange(1, probs.size + 1), counts)
    return np.random.default_rng(seed).permutation(labels)


def _permuted_block(m: int, pi: float, b: int, rng) -> np.ndarray:
    n_treat = int(round(b * pi))
    block = np.zeros(b, dtype=np.int8)
    block[:n_treat] = 1
    n_blocks = math.ceil(m / b)
    out = np.concatenate([rng.permutation(block) for _ in range(n_blocks)])
    return out[:m]


def _biased_coin(m: int, lam: float, rng) -> np.ndarray:
    u = rng.random(m)
    out = np.empty(m, dtype=np.int8)
    d = 0
    for i in range(m):
        if d == 0:
            prob = 0.5
        elif d < 0:
            prob = lam
        else:
            prob = 1.0 - lam
        a = 1 if u[i] < prob else 0
        out[i] = a
        d += 1 if a else -1
    return out


def assign(scheme: RandomizationScheme, strata, seed) -> np.ndarray:
    """Binary assignment vector for units with the given stratum labels.

    Strata are processed in sorted label order from a single stream seeded
    by ``seed``, so the output is a pure function of (scheme, strata, seed).
    """
    strata = np.asarray(strata)
    rng = np.random.default_rng(seed)
    out = np.zeros(strata.shape[0], dtype=np.int8)
    labels = sorted(set(strata.tolist()), key=_sort_key)
    for lab in labels:
        idx = np.flatnonzero(strata == lab)
        pi = scheme.target(lab)
        m = idx.size
        if scheme.variant == "simple":
            a = (rng.random(m) < pi).astype(np.int8)
        elif scheme.variant == "permuted-block":
            a = _permuted_block(m, pi, scheme.block_size, rng)
        else:
            a = _biased_coin(m, scheme.bias, rng)
        out[idx] = a
    return out
