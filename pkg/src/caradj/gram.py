"""Gram matrices, their (pseudo-)inverses, and off-diagonal kernel sums.

Every U-statistic in the package reduces to one of two pair sums over
distinct units ``i != j`` of a stratum,

    sum_{i != j} w_i v_j  x_i' M x_j          (bilinear)
    sum_{i != j} w_i v_j (x_i' M x_j)^2       (squared kernel)

and both are evaluated in O(n p^2 + p^3) by expanding the full double sum
and subtracting the diagonal, never by looping over pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularUpdateError, ValidationError

DEFAULT_RCOND = 1e-10
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GramPair:
    matrix: np.ndarray
    inverse: np.ndarray
    mode: str = "sample"
    pseudo: bool = False
    rcond: float = DEFAULT_RCOND

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


def sample_gram(rows: np.ndarray) -> np.ndarray:
    """Return ``(1/n) sum_i x_i x_i'`` for the rows of an ``n x p`` matrix."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValidationError("sample_gram needs a non-empty n x p matrix")
    G = rows.T @ rows / rows.shape[0]
    return (G + G.T) / 2.0


def invert_or_pseudo(G: np.ndarray, rcond: float = DEFAULT_RCOND, mode: str = "sample") -> GramPair:
    """Invert a symmetric PSD matrix through its eigendecomposition.

    Eigenvalues at or below ``rcond * max|eigenvalue|`` are discarded, which
    yields the Moore-Penrose pseudo-inverse and sets ``pseudo=True``. The
    exact and pseudo paths share the same decomposition so the flag and the
    returned matrix can never disagree.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValidationError("Gram matrix must be square")
    if not np.all(np.isfinite(G)):
        raise ValidationError("Gram matrix contains NaN or Inf")
    p = G.shape[0]
    if p == 0:
        return GramPair(G.copy(), np.zeros((0, 0)), mode, False, rcond)
    scale = np.max(np.abs(G))
    if scale > 0 and np.max(np.abs(G - G.T)) > SYMMETRY_TOL * scale:
        raise ValidationError("Gram matrix is not symmetric")
    Gs = (G + G.T) / 2.0
    w, V = np.linalg.eigh(Gs)
    top = np.max(np.abs(w))
    keep = w > rcond * top if top > 0 else np.zeros(p, dtype=bool)
    pseudo = not bool(keep.all())
    Vk = V[:, keep]
    inv = (Vk / w[keep]) @ Vk.T
    inv = (inv + inv.T) / 2.0
    return GramPair(Gs, inv, mode, pseudo, rcond)


def rank_one_downdate(Ginv: np.ndarray, u: np.ndarray, c: float) -> np.ndarray:
    """Inverse of ``G - c u u'`` from ``Ginv = G^{-1}`` (Sherman-Morrison)."""
    Ginv = np.asarray(Ginv, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if c == 0:
        return Ginv.copy()
    left = Ginv @ u
    right = u @ Ginv
    denom = 1.0 - c * float(u @ left)
    if abs(denom) < 1e-12:
        raise SingularUpdateError(f"rank-one downdate is singular (denominator {denom:.3g})")
    return Ginv + c * np.outer(left, right) / denom


def _check(X, w, v, M):
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("X must be n x p")
    n, p = X.shape
    if w.shape != (n,) or v.shape != (n,):
        raise ValidationError(f"weight vectors must have length {n}")
    if M.shape != (p, p):
        raise ValidationError(f"kernel matrix must be {p} x {p}, got {M.shape}")
    return X, w, v, M


def quadratic_diagonal(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Vector of ``x_i' M x_i``."""
    return np.einsum("ij,ij->i", X @ M, X)


def bilinear_offdiag_sum(X, w, v, M) -> float:
    """``sum_{i != j} w_i v_j x_i' M x_j``."""
    X, w, v, M = _check(X, w, v, M)
    if X.shape[1] == 0:
        return 0.0
    full = (X.T @ w) @ M @ (X.T @ v)
    diag = np.dot(w * v, quadratic_diagonal(X, M))
    return float(full - diag)


def squared_kernel_offdiag_sum(X, w, v, M) -> float:
    """``sum_{i != j} w_i v_j (x_i' M x_j)^2`` via ``tr(M B_v M' B_w)``."""
    X, w, v, M = _check(X, w, v, M)
    if X.shape[1] == 0:
        return 0.0
    Bw = (X * w[:, None]).T @ X
    Bv = (X * v[:, None]).T @ X
    full = np.sum((M @ Bv) * (M.T @ Bw).T)
    diag = np.dot(w * v, quadratic_diagonal(X, M) ** 2)
    return float(full - diag)
