"""Alternating completion: descent on the self-expressive manifold, then an l1 update of ``C``.

Starting from ``C0`` (the sparsest self-expression of the rows of the basis
estimate ``B'``), each outer iteration

1. minimises ``0.5 ||P_Omega(X) - P_Omega(M)||_F^2`` over rank-``r`` matrices
   with ``X C_k = X`` by Riemannian gradient descent, warm-started from the
   previous iterate;
2. recomputes ``C_{k+1}`` as the l1-sparsest self-expression of ``X_{k+1}``.

The l1 problem depends on its dictionary only through the row space, so when
``X_{k+1}`` spans the same row space as the previous dictionary the previous
``C`` is reused unchanged.

Baseline mode skips ``C`` entirely and runs a single descent on the plain
rank-``r`` manifold.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatchError, InfeasibleRankError
from .expression import ExpressionMatrix, ExpressionSettings, init_expression, update_expression
from .io import format_float
from .linalg import SamplingPattern, as_matrix, svd
from .manifold import FixedRankPoint, fixed_rank_manifold, make_manifold, point_from_ambient
from .solver import SolverConfig, solve

CONVERGED = "converged"
MAX_OUTER = "max-outer-iterations"
INFEASIBLE_UPDATE = "infeasible-update"
BASELINE_DONE = "baseline"

FEASIBILITY_TOL = 1e-8
AUGMENT_SCALE = 1e-6
ROW_SPACE_TOL = 1e-10


@dataclass(frozen=True)
class CompletionConfig:
    r: int
    outer_max_iters: int = 50
    outer_tol_rel: float = 1e-6
    solver: SolverConfig = field(default_factory=SolverConfig)
    expression: ExpressionSettings = field(default_factory=ExpressionSettings)
    baseline: bool = False
    seed: int = 0
    rank_tol: float | None = None

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be at least 1")
        if not self.outer_tol_rel > 0:
            raise ValueError("outer_tol_rel must be positive")
        if self.outer_max_iters < 1:
            raise ValueError("outer_max_iters must be at least 1")


@dataclass
class OuterRecord:
    iteration: int
    inner_objective: float
    inner_iterations: int
    inner_termination: str
    l1: float
    rel_change: float
    q: int
    expression_residual: float
    feasible: bool
    infeasible_columns: int
    seconds: float


@dataclass
class CompletionResult:
    point: FixedRankPoint
    expression: ExpressionMatrix | None
    outer: list
    inner_traces: list
    termination_reason: str
    max_membership_violation: float = 0.0
    seconds: float = 0.0

    @property
    def X_hat(self):
        return self.point.embed()

    @property
    def C_hat(self):
        return None if self.expression is None else self.expression.C

    @property
    def outer_iterations(self):
        return len(self.outer)

    @property
    def inner_iterations(self):
        return sum(t.iterations for t in self.inner_traces)

    def write_outer_csv(self, path):
        header = [
            "outer", "innerObjective", "innerIters", "innerTermination", "l1", "relChange",
            "q", "expressionResidual", "feasible", "infeasibleColumns",
        ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for rec in self.outer:
                w.writerow([
                    rec.iteration, format_float(rec.inner_objective), rec.inner_iterations,
                    rec.inner_termination, format_float(rec.l1), format_float(rec.rel_change),
                    rec.q, format_float(rec.expression_residual), int(rec.feasible),
                    rec.infeasible_columns,
                ])

    def write_inner_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["outer", "iter", "objective", "gradNorm", "step", "backtracks"])
            for k, trace in enumerate(self.inner_traces, start=1):
                for i, r in enumerate(trace.records):
                    w.writerow([
                        k, i, format_float(r.objective), format_float(r.grad_norm),
                        format_float(r.step), r.backtracks,
                    ])


def initial_point(M_obs, mfd, rng):
    """Rank-``r`` truncation of ``M_obs W W.T``.

    When the projection has rank below ``r``, small random components inside
    ``range(W)`` (size ``1e-6 * sigma_1``) are added until it does not.
    """
    Y = mfd.project_rows(M_obs)
    for _ in range(20):
        try:
            return point_from_ambient(Y, mfd)
        except InfeasibleRankError:
            s1 = svd(Y, 1).sigma[0] if np.any(Y) else 1.0
            R = mfd.project_rows(rng.standard_normal(Y.shape))
            Y = Y + AUGMENT_SCALE * s1 * R / np.linalg.norm(R, 2)
    raise InfeasibleRankError("could not build a rank-r starting point")


def _with_fallback(new, previous):
    """Keep the previous column of ``C`` wherever the new subproblem was infeasible."""
    bad = new.infeasible
    if previous is None or not np.any(bad):
        return new
    C = new.C.copy()
    C[:, bad] = previous.C[:, bad]
    return ExpressionMatrix(C, new.residuals, new.infeasible, new.iterations)


def _row_space(D, rank_tol):
    f = svd(D)
    if f.sigma.size == 0 or f.sigma[0] == 0.0:
        return f.V[:, :0]
    return f.V[:, f.sigma > rank_tol * f.sigma[0]]


def _same_row_space(Q1, Q2, tol=ROW_SPACE_TOL):
    """True when the orthonormal bases ``Q1`` and ``Q2`` span the same subspace."""
    if Q1.shape != Q2.shape:
        return False
    return float(np.linalg.norm(Q2 - Q1 @ (Q1.T @ Q2), 2)) <= tol


class _Monitor:
    def __init__(self, mfd):
        self.mfd = mfd
        self.worst = 0.0

    def __call__(self, i, X):
        if self.mfd.constrained:
            A = X.embed()
            rel = self.mfd.expression_residual(A) / np.linalg.norm(A)
            self.worst = max(self.worst, rel)


def complete(M_obs, pattern, Bprime, cfg):
    """Complete ``M`` from ``M_obs = P_Omega(M)`` using the basis estimate ``Bprime``.

    Parameters
    ----------
    M_obs : array_like, shape (m, n)
        Observed matrix; entries outside ``pattern`` are ignored.
    pattern : SamplingPattern
    Bprime : array_like, shape (n, r_b) or None
        Basis estimate; unused (may be ``None``) in baseline mode.
    cfg : CompletionConfig

    Raises
    ------
    InfeasibleRankError
        ``C0`` leaves fewer than ``r`` admissible row directions; the error
        carries ``q``.
    """
    start = time.perf_counter()
    M_obs = as_matrix(M_obs, "M_obs")
    if not isinstance(pattern, SamplingPattern):
        pattern = SamplingPattern(pattern)
    if pattern.shape != M_obs.shape:
        raise DimensionMismatchError(f"pattern {pattern.shape} vs M_obs {M_obs.shape}")
    M_obs = np.where(pattern.mask, M_obs, 0.0)
    m, n = M_obs.shape
    rng = np.random.default_rng(cfg.seed)

    if cfg.baseline:
        mfd = fixed_rank_manifold(m, n, cfg.r, cfg.rank_tol)
        X0 = initial_point(M_obs, mfd, rng)
        t0 = time.perf_counter()
        X, trace = solve(mfd, X0, M_obs, pattern, cfg.solver)
        rel = float(np.linalg.norm(X.embed() - X0.embed()) / np.linalg.norm(X0.embed()))
        rec = OuterRecord(
            1, trace.final_objective, trace.iterations, trace.termination_reason,
            float("nan"), rel, 0, 0.0, True, 0, time.perf_counter() - t0,
        )
        return CompletionResult(X, None, [rec], [trace], BASELINE_DONE, 0.0, time.perf_counter() - start)

    Bprime = as_matrix(Bprime, "Bprime")
    if Bprime.shape[0] != n:
        raise DimensionMismatchError(f"Bprime has {Bprime.shape[0]} rows, expected n = {n}")
    expr = init_expression(Bprime, cfg.expression)
    mfd = make_manifold(expr.C, cfg.r, m, cfg.rank_tol)
    # The column subproblems see the dictionary only through its row space.
    tol = mfd.rank_tol
    basis = _row_space(Bprime.T, tol)
    X = initial_point(M_obs, mfd, rng)

    outer, traces = [], []
    worst = 0.0
    reason = MAX_OUTER
    for k in range(1, cfg.outer_max_iters + 1):
        t0 = time.perf_counter()
        monitor = _Monitor(mfd)
        X_prev = X.embed()
        X_new, trace = solve(mfd, X, M_obs, pattern, cfg.solver, callback=monitor)
        traces.append(trace)
        worst = max(worst, monitor.worst)
        A = X_new.embed()
        new_basis = _row_space(A, tol)
        if _same_row_space(basis, new_basis):
            new = expr
        else:
            new = _with_fallback(update_expression(A, cfg.expression), expr)
        basis = new_basis
        rel = float(np.linalg.norm(A - X_prev) / np.linalg.norm(X_prev))
        res = float(np.linalg.norm(A @ new.C - A) / np.linalg.norm(A))
        try:
            mfd_new = make_manifold(new.C, cfg.r, m, cfg.rank_tol)
            q_new = mfd_new.q
        except InfeasibleRankError as exc:
            mfd_new, q_new = None, exc.q
        outer.append(OuterRecord(
            k, trace.final_objective, trace.iterations, trace.termination_reason,
            new.objective, rel, q_new, res, res <= FEASIBILITY_TOL,
            int(np.count_nonzero(new.infeasible)), time.perf_counter() - t0,
        ))
        X = X_new
        if mfd_new is None:
            reason = INFEASIBLE_UPDATE
            break
        expr, mfd = new, mfd_new
        if rel <= cfg.outer_tol_rel:
            reason = CONVERGED
            break
        if k < cfg.outer_max_iters:
            try:
                X = point_from_ambient(A, mfd)
            except InfeasibleRankError:
                reason = INFEASIBLE_UPDATE
                break

    return CompletionResult(X, expr, outer, traces, reason, worst, time.perf_counter() - start)


def dimension_report(mfd, observed_count=None):
    """Dimensions of ``mfd`` and the ratio of observations to degrees of freedom."""
    report = {
        "m": mfd.m,
        "n": mfd.n,
        "r": mfd.r,
        "q": mfd.q,
        "dimension": mfd.dimension,
        "tangent_dimension": mfd.tangent_dimension,
    }
    if observed_count is not None:
        report["observed"] = int(observed_count)
        report["observed_per_dimension"] = observed_count / mfd.dimension if mfd.dimension else float("inf")
        report["observed_per_tangent_dimension"] = (
            observed_count / mfd.tangent_dimension if mfd.tangent_dimension else float("inf")
        )
    return report
