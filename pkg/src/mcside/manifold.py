"""Fixed-rank manifold geometry, with and without a self-expressive constraint.

A point ``X`` of rank ``r`` lives on the constrained set when ``X C = X`` for
a given expression matrix ``C`` with zero diagonal. Writing ``W`` for an
orthonormal basis of ``ker((C - I).T)``, membership is equivalent to
``X W W.T = X``: the row space of ``X`` sits inside ``range(W)``.

Tangent vectors are carried in ambient ``m x n`` form. The tangent projection
is the fixed-rank projector followed by right multiplication with
``W W.T``; because ``V V.T W W.T = V V.T`` at any member point, the two
factors commute there and the composite is an orthogonal projector.

The baseline manifold (plain rank-``r`` matrices) is the same object with
no ``C`` and no ``W``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    InfeasibleRankError,
    NearDegenerateTruncationWarning,
    NonzeroDiagonalError,
    OffManifoldError,
    RankDeficientStepError,
)
from .linalg import SvdFactors, as_matrix, default_rank_tol, null_space_basis, svd

OFF_MANIFOLD_TOL = 1e-6
DEGENERATE_GAP = 1e-10


@dataclass(frozen=True, eq=False)
class FixedRankPoint:
    """Rank-``r`` matrix stored as its compact SVD ``U diag(sigma) V.T``."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        r = self.sigma.shape[0]
        if self.U.shape[1] != r or self.V.shape[1] != r:
            raise DimensionMismatchError("U, sigma, V disagree on the rank")
        if r == 0 or np.any(self.sigma <= 0):
            raise InfeasibleRankError("a fixed-rank point needs strictly positive singular values")

    @classmethod
    def from_factors(cls, factors: SvdFactors):
        return cls(factors.U, factors.sigma, factors.V)

    @property
    def rank(self):
        return self.sigma.shape[0]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    def embed(self):
        return (self.U * self.sigma) @ self.V.T

    def scaled(self, c):
        """The point ``c * X`` for ``c > 0``."""
        return FixedRankPoint(self.U, self.sigma * c, self.V)


def embed(X: FixedRankPoint):
    return X.embed()


@dataclass(frozen=True, eq=False)
class TangentVector:
    ambient: np.ndarray
    base: FixedRankPoint

    @property
    def norm(self):
        return float(np.linalg.norm(self.ambient))


@dataclass(frozen=True, eq=False)
class SelfExpressiveManifold:
    """Rank-``r`` ``m x n`` matrices satisfying ``X C = X``.

    ``C is None`` denotes the unconstrained fixed-rank manifold (``q = 0``,
    no ``W`` projection).
    """

    m: int
    n: int
    r: int
    C: np.ndarray | None = None
    W: np.ndarray | None = None
    q: int = 0
    rank_tol: float = 0.0
    _C_minus_I: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def constrained(self):
        return self.C is not None

    @property
    def dimension(self):
        """The count ``(m + n - r) r - q``."""
        return (self.m + self.n - self.r) * self.r - self.q

    @property
    def tangent_dimension(self):
        """Rank of the tangent projector, ``(m + n - q - r) r``.

        Equals :attr:`dimension` only when ``q = 0`` or ``r = 1``.
        """
        return (self.m + self.n - self.q - self.r) * self.r

    def expression_residual(self, A):
        """``||A (C - I)||_F`` (zero on the unconstrained manifold)."""
        if not self.constrained:
            return 0.0
        return float(np.linalg.norm(A @ self._C_minus_I))

    def check_member(self, X: FixedRankPoint, tol=OFF_MANIFOLD_TOL):
        if X.shape != (self.m, self.n) or X.rank != self.r:
            raise DimensionMismatchError(
                f"point {X.shape} rank {X.rank} vs manifold {(self.m, self.n)} rank {self.r}"
            )
        if self.constrained:
            A = X.embed()
            res = self.expression_residual(A)
            if res > tol * np.linalg.norm(A):
                raise OffManifoldError(f"||X(C-I)||_F = {res:.3e} exceeds {tol} * ||X||_F")

    def project_rows(self, A):
        """``A W W.T``; identity when unconstrained."""
        if not self.constrained:
            return A
        return (A @ self.W) @ self.W.T


def make_manifold(C, r, m, rank_tol=None):
    """Build the self-expressive manifold for expression matrix ``C``.

    Raises
    ------
    NonzeroDiagonalError
        ``diag(C)`` is not exactly zero.
    InfeasibleRankError
        Fewer than ``r`` null directions of ``(C - I).T`` remain.
    """
    C = as_matrix(C, "C")
    n = C.shape[0]
    if C.shape != (n, n):
        raise DimensionMismatchError(f"C must be square, got {C.shape}")
    if np.any(np.diag(C) != 0.0):
        raise NonzeroDiagonalError("diag(C) must be exactly zero")
    if r < 1 or m < 1:
        raise DimensionMismatchError("r and m must be positive")
    if rank_tol is None:
        rank_tol = default_rank_tol((m, n))
    CmI = C - np.eye(n)
    W, q = null_space_basis(CmI.T, rank_tol)
    if n - q < r:
        raise InfeasibleRankError(
            f"rank(C - I) = {q} leaves {n - q} < r = {r} admissible row directions", q=q
        )
    C = C.copy()
    C.setflags(write=False)
    W.setflags(write=False)
    return SelfExpressiveManifold(m, n, r, C, W, q, float(rank_tol), CmI)


def fixed_rank_manifold(m, n, r, rank_tol=None):
    """Unconstrained rank-``r`` manifold, the baseline geometry."""
    if not 1 <= r <= min(m, n):
        raise InfeasibleRankError(f"r = {r} not in [1, min({m}, {n})]")
    if rank_tol is None:
        rank_tol = default_rank_tol((m, n))
    return SelfExpressiveManifold(m, n, r, rank_tol=float(rank_tol))


def project_tangent(mfd, X, Z, check=True):
    """Orthogonal projection of an ambient matrix onto the tangent space at ``X``.

    ``(P_U Z P_V + (I - P_U) Z P_V + P_U Z (I - P_V)) P_W``
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape != (mfd.m, mfd.n):
        raise DimensionMismatchError(f"Z {Z.shape} vs manifold {(mfd.m, mfd.n)}")
    if check:
        mfd.check_member(X)
    U, V = X.U, X.V
    UtZ = U.T @ Z
    ZV = Z @ V
    P = U @ UtZ + (ZV - U @ (UtZ @ V)) @ V.T
    return TangentVector(mfd.project_rows(P), X)


def tangent_residuals(mfd, xi):
    """Fixed-rank and self-expressive tangency residuals of ``xi``.

    Returns ``(||(I - P_U) xi (I - P_V)||_F, ||xi (C - I)||_F)``.
    """
    X = xi.base
    A = xi.ambient
    A_perp = A - X.U @ (X.U.T @ A)
    A_perp = A_perp - (A_perp @ X.V) @ X.V.T
    return float(np.linalg.norm(A_perp)), mfd.expression_residual(A)


def retract(mfd, X, xi, t=1.0):
    """Metric-projection retraction: rank-``r`` truncated SVD of ``X + t xi``.

    Raises :class:`RankDeficientStepError` when ``sigma_r`` falls below
    ``rank_tol * sigma_1``; warns with
    :class:`NearDegenerateTruncationWarning` when the truncation is not unique
    to working precision.
    """
    step = xi.ambient if isinstance(xi, TangentVector) else np.asarray(xi, dtype=np.float64)
    if t == 0.0 or not np.any(step):
        return X
    r = mfd.r
    try:
        f = svd(X.embed() + t * step)
    except Exception as exc:
        raise RankDeficientStepError(f"SVD of the retraction target failed: {exc}") from exc
    s = f.sigma
    if s[0] == 0.0 or s[r - 1] <= mfd.rank_tol * s[0]:
        raise RankDeficientStepError(
            f"sigma_r = {s[r - 1]:.3e} below {mfd.rank_tol:.1e} * sigma_1"
        )
    if s.shape[0] > r and (s[r - 1] - s[r]) / s[0] < DEGENERATE_GAP:
        warnings.warn(
            f"sigma_r - sigma_(r+1) = {s[r - 1] - s[r]:.3e}; truncation not unique",
            NearDegenerateTruncationWarning,
            stacklevel=2,
        )
    return FixedRankPoint(f.U[:, :r], s[:r].copy(), f.V[:, :r])


def point_from_ambient(A, mfd):
    """Rank-``r`` truncation of ``A W W.T``, a point on ``mfd``."""
    A = as_matrix(A)
    if A.shape != (mfd.m, mfd.n):
        raise DimensionMismatchError(f"A {A.shape} vs manifold {(mfd.m, mfd.n)}")
    Y = mfd.project_rows(A)
    f = svd(Y)
    s = f.sigma
    r = mfd.r
    if s[0] == 0.0 or s[r - 1] <= mfd.rank_tol * s[0]:
        raise InfeasibleRankError(f"projected matrix has rank below r = {r}")
    return FixedRankPoint(f.U[:, :r], s[:r].copy(), f.V[:, :r])
