"""Riemannian gradient descent with Armijo backtracking.

Minimises ``f(X) = 0.5 * ||P_Omega(X) - P_Omega(M)||_F^2`` over a
:class:`~mcside.manifold.SelfExpressiveManifold`.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BacktrackExhaustedError, RankDeficientStepError
from .io import format_float
from .manifold import project_tangent, retract

GRADIENT_TOLERANCE = "gradient-tolerance"
MAX_ITERATIONS = "max-iterations"
STALLED_STEP = "stalled-step"


@dataclass(frozen=True)
class SolverConfig:
    """Armijo gradient-descent settings.

    ``tau`` is an absolute gradient-norm tolerance; when it is ``None`` the
    tolerance is ``tau_rel * ||P_Omega(M)||_F``.
    """

    alpha_bar: float = 1.0
    beta: float = 0.5
    sigma: float = 1e-4
    tau: float | None = None
    tau_rel: float = 1e-6
    max_iters: int = 500
    max_backtracks: int = 50

    def __post_init__(self):
        if not self.alpha_bar > 0:
            raise ValueError("alpha_bar must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.tau_rel > 0:
            raise ValueError("tau_rel must be positive")
        if self.max_iters < 0 or self.max_backtracks < 1:
            raise ValueError("max_iters >= 0 and max_backtracks >= 1 required")

    def tolerance(self, M_obs):
        if self.tau is not None:
            return self.tau
        return self.tau_rel * float(np.linalg.norm(M_obs))


@dataclass
class IterationRecord:
    objective: float
    grad_norm: float
    step: float
    backtracks: int


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    termination_reason: str = ""
    final_objective: float = float("nan")

    @property
    def iterations(self):
        """Number of accepted steps."""
        return sum(1 for rec in self.records if rec.step > 0)

    @property
    def objectives(self):
        return np.array([rec.objective for rec in self.records])

    def write_csv(self, path_or_file):
        rows = [
            [i, format_float(r.objective), format_float(r.grad_norm), format_float(r.step), r.backtracks]
            for i, r in enumerate(self.records)
        ]
        header = ["iter", "objective", "gradNorm", "step", "backtracks"]
        if hasattr(path_or_file, "write"):
            _write_rows(path_or_file, header, rows)
        else:
            with open(path_or_file, "w", newline="") as fh:
                _write_rows(fh, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def objective(X, M_obs, mask):
    """``0.5 * ||P_Omega(X) - M_obs||_F^2`` for an ambient or fixed-rank ``X``."""
    A = X.embed() if hasattr(X, "embed") else X
    R = np.where(mask, A - M_obs, 0.0)
    return 0.5 * float(np.vdot(R, R))


def _mask_of(pattern):
    return getattr(pattern, "mask", pattern)


def riemannian_gradient(mfd, X, M_obs, pattern, check=True):
    """Tangent projection of the Euclidean gradient ``P_Omega(X) - M_obs``."""
    mask = _mask_of(pattern)
    residual = np.where(mask, X.embed() - M_obs, 0.0)
    return project_tangent(mfd, X, residual, check=check)


@dataclass(frozen=True)
class ArmijoResult:
    point: object
    backtracks: int
    value: float
    step: float


def armijo_step(mfd, X, xi, f, cfg, fx=None):
    """Backtracking along the retraction curve ``t -> R_X(t xi)``.

    Accepts the smallest ``m >= 0`` with
    ``f(X) - f(R_X(alpha_bar beta^m xi)) >= sigma alpha_bar beta^m ||xi||^2``.
    A rank-deficient retraction skips to the next ``m``.
    """
    if fx is None:
        fx = f(X)
    g = float(np.vdot(xi.ambient, xi.ambient))
    t = cfg.alpha_bar
    for m in range(cfg.max_backtracks):
        try:
            Y = retract(mfd, X, xi, t)
        except RankDeficientStepError:
            t *= cfg.beta
            continue
        fy = f(Y)
        if fx - fy >= cfg.sigma * t * g:
            return ArmijoResult(Y, m, fy, t)
        t *= cfg.beta
    raise BacktrackExhaustedError(f"no sufficient decrease after {cfg.max_backtracks} trials")


def solve(mfd, X0, M_obs, pattern, cfg=None, callback=None):
    """Run gradient descent from ``X0``.

    ``callback(i, X)`` is called after every accepted step with the new
    iterate.

    Returns
    -------
    X_hat : FixedRankPoint
    trace : SolveTrace
        One record per gradient evaluation; the last record has ``step = 0``
        when the run ended on the gradient test or a stalled step.
    """
    cfg = cfg or SolverConfig()
    mask = _mask_of(pattern)
    M_obs = np.where(mask, M_obs, 0.0)
    tau = cfg.tolerance(M_obs)
    mfd.check_member(X0)

    def f(Y):
        return objective(Y, M_obs, mask)

    X = X0
    fx = f(X)
    trace = SolveTrace()
    for _ in range(cfg.max_iters):
        xi = riemannian_gradient(mfd, X, M_obs, mask, check=False)
        gnorm = xi.norm
        if gnorm < tau or gnorm == 0.0:
            trace.records.append(IterationRecord(fx, gnorm, 0.0, 0))
            trace.termination_reason = GRADIENT_TOLERANCE
            trace.final_objective = fx
            return X, trace
        descent = type(xi)(-xi.ambient, X)
        try:
            res = armijo_step(mfd, X, descent, f, cfg, fx)
        except BacktrackExhaustedError:
            trace.records.append(IterationRecord(fx, gnorm, 0.0, cfg.max_backtracks))
            trace.termination_reason = STALLED_STEP
            trace.final_objective = fx
            return X, trace
        trace.records.append(IterationRecord(fx, gnorm, res.step, res.backtracks))
        X, fx = res.point, res.value
        if callback is not None:
            callback(len(trace.records), X)
    trace.termination_reason = MAX_ITERATIONS
    trace.final_objective = fx
    return X, trace
