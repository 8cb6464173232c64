"""Dense linear-algebra kernels: SVD, null spaces, masking and inner products.

Everything here is a pure function of its inputs. Matrices are plain
``float64`` numpy arrays; the only container type is :class:`SamplingPattern`
for the observed index set and :class:`SvdFactors` for decompositions.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError, NonFiniteError, NumericalFailureError

EPS = np.finfo(np.float64).eps
RANK_TOL_SCALE = 1e3


def as_matrix(A, name="A"):
    """Return ``A`` as a finite 2-D float64 array, raising on NaN/Inf."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return A


def default_rank_tol(shape):
    """Relative numerical-rank threshold ``max(m, n) * eps * 1e3``."""
    return max(shape) * EPS * RANK_TOL_SCALE


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """Thin SVD ``U @ diag(sigma) @ V.T`` with ``sigma`` nonincreasing."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def k(self):
        return self.sigma.shape[0]

    def reconstruct(self):
        return (self.U * self.sigma) @ self.V.T


def _canonical_signs(U, V):
    # largest-magnitude entry of each U column made positive; V follows
    if U.shape[1] == 0:
        return U, V
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def svd(A, k=None):
    """Top-``k`` (or full thin) singular triplets of ``A``.

    Parameters
    ----------
    A : array_like, shape (m, n)
    k : int or None
        Number of triplets to keep; ``None`` keeps all ``min(m, n)``.

    Returns
    -------
    SvdFactors
        Signs canonicalised so the largest-magnitude entry of every column
        of ``U`` is positive.
    """
    A = as_matrix(A)
    kmax = min(A.shape)
    if k is None:
        k = kmax
    if not 1 <= k <= kmax:
        raise DimensionMismatchError(f"k={k} outside [1, {kmax}] for shape {A.shape}")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(str(exc)) from exc
    U, V = _canonical_signs(U[:, :k], Vt[:k].T)
    return SvdFactors(U, s[:k].copy(), V)


def numerical_rank(sigma, rank_tol):
    """Count singular values strictly above ``rank_tol * sigma[0]``."""
    sigma = np.asarray(sigma)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > rank_tol * sigma[0]))


def null_space_basis(A, rank_tol=None):
    """Orthonormal basis of ``ker(A)`` and the numerical rank of ``A``.

    Returns
    -------
    W : ndarray, shape (n, n - q)
    q : int
        Number of singular values above ``rank_tol * sigma_1``.
    """
    A = as_matrix(A)
    if rank_tol is None:
        rank_tol = default_rank_tol(A.shape)
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    try:
        _, s, Vt = np.linalg.svd(A, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(str(exc)) from exc
    q = numerical_rank(s, rank_tol)
    W = Vt[q:].T
    if W.shape[1]:
        W, _ = _canonical_signs(W, np.zeros((1, W.shape[1])))
    return np.ascontiguousarray(W), q


@dataclass(frozen=True)
class SamplingPattern:
    """Observed index set as a boolean mask."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise DimensionMismatchError("mask must be 2-D")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_indices(cls, shape, rows, cols):
        mask = np.zeros(shape, dtype=bool)
        mask[np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)] = True
        return cls(mask)

    @classmethod
    def full(cls, shape):
        return cls(np.ones(shape, dtype=bool))

    @property
    def shape(self):
        return self.mask.shape

    @property
    def observed_count(self):
        return int(np.count_nonzero(self.mask))

    def indices(self):
        """Row-major ``(rows, cols)`` of the observed entries."""
        return np.nonzero(self.mask)

    def __eq__(self, other):
        if not isinstance(other, SamplingPattern):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.mask, other.mask))

    __hash__ = None


def apply_mask(A, pattern):
    """P_Omega: keep observed entries, zero the rest."""
    A = as_matrix(A)
    if A.shape != pattern.shape:
        raise DimensionMismatchError(f"matrix {A.shape} vs pattern {pattern.shape}")
    return np.where(pattern.mask, A, 0.0)


def frobenius_norm(A):
    return float(np.linalg.norm(as_matrix(A)))


def inner_product(A, B):
    """Euclidean inner product ``tr(A.T @ B)``."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape != B.shape:
        raise DimensionMismatchError(f"{A.shape} vs {B.shape}")
    return float(np.vdot(A, B))
