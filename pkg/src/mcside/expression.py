"""Sparse self-expression: ``min ||C||_1`` s.t. ``D C = D``, ``diag(C) = 0``.

The problem separates over columns. Column ``j`` solves

    min ||c||_1   s.t.   ||D c - d_j||_2 <= eps_rel * ||d_j||_2,   c_j = 0,

with ``eps_rel = 0`` giving exact basis pursuit. All columns are solved in one
vectorised ADMM loop (projection onto the constraint set, soft threshold,
scaled dual update); each column's iterates depend only on that column's
data, so the result does not depend on which other columns are in the batch.

The projection onto the constraint set uses the SVD of ``D`` with column ``j``
zeroed. With ``eps_rel > 0`` it needs one scalar multiplier found by Newton's
method on the reciprocal residual norm, which is concave and increasing in the
multiplier, so the iteration is monotone from zero.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, nnls

from .io import format_float
from .linalg import as_matrix, default_rank_tol

RESIDUAL_FLOOR = 1e-12
GAP_EVERY = 5
FINISH_EVERY = 20
LP_REFIT_TOL = 1e-6


@dataclass(frozen=True)
class ExpressionSettings:
    """Solver settings for the column subproblems.

    ``lam`` is the weight of the sparsity term in the joint objective. The
    alternating scheme never uses it; it is stored so configurations can
    carry it.

    With ``eps_rel = 0`` and ``lp_fallback`` set, columns that ADMM has not
    certified after ``max_iters`` iterations are re-solved as a linear
    program (HiGHS), then refitted on the LP support to exact feasibility.
    """

    eps_rel: float = 0.0
    max_iters: int = 2000
    rho: float = 10.0
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    polish: bool = True
    gap_tol: float = 1e-9
    relax: float = 1.8
    rank_tol: float | None = None
    lam: float | None = None
    lp_fallback: bool = True

    def __post_init__(self):
        if not self.eps_rel >= 0:
            raise ValueError("eps_rel must be nonnegative")
        if not 0 < self.relax < 2:
            raise ValueError("relax must lie in (0, 2)")
        if self.rho <= 0 or self.max_iters < 1:
            raise ValueError("rho > 0 and max_iters >= 1 required")


@dataclass(frozen=True, eq=False)
class ExpressionMatrix:
    """Assembled expression matrix with per-column diagnostics."""

    C: np.ndarray
    residuals: np.ndarray
    infeasible: np.ndarray
    iterations: np.ndarray

    @property
    def column_l1(self):
        return np.abs(self.C).sum(axis=0)

    @property
    def objective(self):
        return float(np.abs(self.C).sum())

    @property
    def max_residual(self):
        return float(self.residuals.max()) if self.residuals.size else 0.0

    @property
    def infeasible_columns(self):
        return np.flatnonzero(self.infeasible)

    def write_diagnostics(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["column", "l1", "residual", "flag"])
            for j, (l1, res, bad) in enumerate(zip(self.column_l1, self.residuals, self.infeasible)):
                w.writerow([j, format_float(l1), format_float(res), "infeasible" if bad else "ok"])


def _soft(v, k):
    return np.sign(v) * np.maximum(np.abs(v) - k[:, None], 0.0)


class _ColumnSystems:
    """Per-column SVD data for the constraint ``||D_{-j} c - d_j|| <= eps_j``."""

    def __init__(self, D, cols, settings):
        a, n = D.shape
        self.n = n
        self.cols = np.asarray(cols, dtype=int)
        J = self.cols.size
        stack = np.broadcast_to(D, (J, a, n)).copy()
        stack[np.arange(J), :, self.cols] = 0.0
        d = D[:, self.cols].T  # (J, a)
        U, s, Vt = np.linalg.svd(stack, full_matrices=False)
        tol = settings.rank_tol if settings.rank_tol is not None else default_rank_tol((a, n))
        keep = s > tol * s[:, :1]
        s = np.where(keep, s, 0.0)
        U = U * keep[:, None, :]
        self.V = np.swapaxes(Vt, 1, 2) * keep[:, None, :]  # (J, n, k)
        self.s = s
        self.b = np.einsum("jak,ja->jk", U, d)
        self.dnorm = np.linalg.norm(d, axis=1)
        self.delta = np.linalg.norm(d - np.einsum("jak,jk->ja", U, self.b), axis=1)
        eps = settings.eps_rel * self.dnorm
        floor = RESIDUAL_FLOOR * np.maximum(1.0, self.dnorm)
        self.infeasible = self.delta > eps + floor
        self.eps_in = np.sqrt(np.maximum(eps**2 - self.delta**2, 0.0))
        self.D = D
        self.d = d

    def subset(self, idx):
        out = object.__new__(_ColumnSystems)
        out.n = self.n
        for name in ("cols", "V", "s", "b", "dnorm", "delta", "infeasible", "eps_in", "d"):
            setattr(out, name, getattr(self, name)[idx])
        out.D = self.D
        return out

    def project(self, v):
        """Euclidean projection of each row of ``v`` onto its column's constraint set."""
        J = v.shape[0]
        rows = np.arange(J)
        av = np.einsum("jnk,jn->jk", self.V, v)
        perp = v - np.einsum("jnk,jk->jn", self.V, av)
        perp[rows, self.cols] = 0.0
        s, b = self.s, self.b
        rv = s * av - b
        within = np.einsum("jk,jk->j", rv, rv) <= self.eps_in**2
        a = av.copy()
        pos = s > 0
        exact = ~within & (self.eps_in == 0.0)
        if np.any(exact):
            a_exact = np.divide(b, s, out=av.copy(), where=pos)
            a[exact] = a_exact[exact]
        ball = ~within & ~exact
        if np.any(ball):
            a[ball] = self._ball_step(av[ball], s[ball], b[ball], rv[ball], self.eps_in[ball])
        return np.einsum("jnk,jk->jn", self.V, a) + perp

    def dual_value(self, g):
        """Dual objective at the rescaled projection of subgradients ``g``.

        ``y = U diag(1/s) V.T g`` gives ``D_{-j}.T y = V V.T g``; dividing by
        ``max(1, ||V V.T g||_inf)`` makes ``y`` feasible for
        ``max y.T d - eps ||y||`` s.t. ``||D_{-j}.T y||_inf <= 1``.
        """
        a = np.einsum("jnk,jn->jk", self.V, g)
        h = np.einsum("jnk,jk->jn", self.V, a)
        h[np.arange(h.shape[0]), self.cols] = 0.0
        theta = 1.0 / np.maximum(1.0, np.abs(h).max(axis=1))
        w = np.divide(a, self.s, out=np.zeros_like(a), where=self.s > 0)
        value = np.einsum("jk,jk->j", w, self.b) - self.eps_in * np.linalg.norm(w, axis=1)
        return theta * value

    @staticmethod
    def _ball_step(av, s, b, rv, eps):
        mu = np.zeros(av.shape[0])
        s2 = s * s
        for _ in range(60):
            den = 1.0 + mu[:, None] * s2
            phi = np.sqrt(np.einsum("jk,jk->j", rv, rv / den**2))
            dphi = -np.einsum("jk,jk->j", rv * rv, s2 / den**3) / phi
            # Newton on 1/phi - 1/eps
            step = (1.0 / phi - 1.0 / eps) * phi**2 / dphi
            mu_new = mu + step
            if np.all(np.abs(step) <= 1e-14 * np.maximum(mu_new, 1e-300)):
                mu = mu_new
                break
            mu = mu_new
        return (av + mu[:, None] * s * b) / (1.0 + mu[:, None] * s2)


def _admm(sys, settings, finish=None):
    """Vectorised scaled-form ADMM over the columns in ``sys``.

    ``rho * u`` is always a subgradient of the l1 norm at ``z``, so its
    projection onto ``range(D_{-j}.T)`` yields a dual-feasible point after
    rescaling into the unit box. A column stops when the resulting duality
    gap is below ``gap_tol`` relative to its objective, or when the usual
    primal and dual residual tests pass.

    ``finish(rows, g)`` may return ``{row: c}`` for columns solved exactly
    from the current subgradients ``g``; those columns stop with ``c``.
    """
    J, n = sys.cols.size, sys.n
    z = np.zeros((J, n))
    u = np.zeros((J, n))
    x = np.zeros((J, n))
    rho = settings.rho
    iters = np.zeros(J, dtype=int)
    gaps = np.full(J, np.inf)
    finished = {}
    active = np.arange(J)
    sub = sys
    sqn = np.sqrt(n)
    for it in range(1, settings.max_iters + 1):
        za, ua = z[active], u[active]
        xa = sub.project(za - ua)
        xr = settings.relax * xa + (1.0 - settings.relax) * za
        zn = _soft(xr + ua, np.full(active.size, 1.0 / rho))
        zn[np.arange(active.size), sub.cols] = 0.0
        ua = ua + xr - zn
        r = np.linalg.norm(xa - zn, axis=1)
        s = rho * np.linalg.norm(zn - za, axis=1)
        eps_pri = sqn * settings.abs_tol + settings.rel_tol * np.maximum(
            np.linalg.norm(xa, axis=1), np.linalg.norm(zn, axis=1)
        )
        eps_dual = sqn * settings.abs_tol + settings.rel_tol * rho * np.linalg.norm(ua, axis=1)
        x[active], z[active], u[active] = xa, zn, ua
        iters[active] = it
        done = (r <= eps_pri) & (s <= eps_dual)
        if it % GAP_EVERY == 0:
            l1 = np.abs(xa).sum(axis=1)
            gap = l1 - sub.dual_value(rho * ua)
            gaps[active] = gap
            done |= gap <= settings.gap_tol * np.maximum(l1, 1e-300)
        if finish is not None and it % FINISH_EVERY == 0:
            found = finish(active[~done], rho * ua[~done])
            finished.update(found)
            done |= np.isin(active, list(found))
        if np.all(done):
            break
        if np.any(done):
            keep = ~done
            active = active[keep]
            sub = sub.subset(keep)
    return x, z, u, iters, finished


def _residual(D, c, j):
    return float(np.linalg.norm(D @ c - D[:, j]))


def _kkt_certificate(D, j, c, tol=1e-9):
    """True when ``c`` provably minimises ``||c||_1`` s.t. ``D c = d_j``, ``c_j = 0``.

    Checks for a dual vector ``y`` with ``D_S.T y = sign(c_S)`` on the support
    and ``|D_k.T y| <= 1`` on every other admissible column.
    """
    support = np.flatnonzero(c)
    if support.size == 0:
        return False
    A = D[:, support]
    sgn = np.sign(c[support])
    y = np.linalg.lstsq(A.T, sgn, rcond=None)[0]
    if np.linalg.norm(A.T @ y - sgn) > tol * np.sqrt(support.size):
        return False
    g = D.T @ y
    g[j] = 0.0
    return bool(np.max(np.abs(g)) <= 1.0 + tol)


def _dual_finish(D, j, g, bound, gap_tol):
    """Exact basis-pursuit solution guided by an approximate subgradient ``g``.

    The columns where ``|D_k.T y|`` is near its maximum (``y`` fitted to
    ``g``) form a candidate active set. A sign-constrained nonnegative least
    squares fit on that set gives a primal point; it is returned only when a
    dual vector corrected onto its support certifies a relative duality gap
    of at most ``gap_tol``.
    """
    n = D.shape[1]
    adm = np.arange(n) != j
    d = D[:, j]
    y0 = np.linalg.lstsq(D[:, adm].T, g[adm], rcond=None)[0]
    h = D.T @ y0
    h[j] = 0.0
    peak = np.abs(h).max()
    if peak == 0.0:
        return None
    for delta in (1e-3, 1e-2, 1e-1):
        act = np.flatnonzero(np.abs(h) >= (1.0 - delta) * peak)
        sgn = np.sign(h[act])
        # the returned rnorm is unreliable for wide systems; refit and recheck
        pos = nnls(D[:, act] * sgn, d)[0] > 0
        if not np.any(pos):
            continue
        P, sP = act[pos], sgn[pos]
        DP = D[:, P]
        w = np.linalg.lstsq(DP * sP, d, rcond=None)[0]
        if np.any(w < 0) or np.linalg.norm(DP @ (sP * w) - d) > bound:
            continue
        y = y0 + np.linalg.lstsq(DP.T, sP - DP.T @ y0, rcond=None)[0]
        hy = D.T @ y
        hy[j] = 0.0
        l1 = float(w.sum())
        gap = l1 - float(y @ d) / max(1.0, float(np.abs(hy).max()))
        if gap <= gap_tol * l1:
            c = np.zeros(n)
            c[P] = sP * w
            return c
    return None


def _lp_column(D, j, bound):
    """Basis pursuit for column ``j`` as an LP over ``c = c+ - c-``.

    The LP optimum is refitted by least squares on its support, which is
    exact for a basic solution and removes the LP feasibility tolerance.
    Returns ``None`` if the LP fails or the refit is not feasible.
    """
    n = D.shape[1]
    adm = np.flatnonzero(np.arange(n) != j)
    A = D[:, adm]
    res = linprog(np.ones(2 * adm.size), A_eq=np.hstack([A, -A]), b_eq=D[:, j],
                  bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    v = res.x[: adm.size] - res.x[adm.size:]
    c = np.zeros(n)
    c[adm] = v
    mag = np.abs(c)
    peak = mag.max() if mag.size else 0.0
    rank = np.linalg.matrix_rank(A)
    candidates = [np.flatnonzero(mag > rel * peak) for rel in (1e-12, 1e-9)]
    candidates.append(np.sort(np.argsort(-mag, kind="stable")[:rank]))
    for support in candidates:
        fit = _support_fit(D, j, support, bound)
        if fit is not None and np.abs(fit).sum() <= res.fun * (1 + LP_REFIT_TOL) + 1e-15:
            return fit
    return None


def _support_fit(D, j, support, bound):
    support = support[support != j]
    if support.size == 0:
        return None
    c = np.zeros(D.shape[1])
    c[support] = np.linalg.lstsq(D[:, support], D[:, j], rcond=None)[0]
    if _residual(D, c, j) > bound:
        return None
    return c


def _candidate_supports(x, z, k):
    mag = np.abs(x)
    peak = mag.max() if mag.size else 0.0
    yield np.flatnonzero(z)
    for rel in (1e-6, 1e-3):
        yield np.flatnonzero(mag > rel * peak)
    if k > 0:
        yield np.sort(np.argsort(-mag, kind="stable")[:k])


def _certified_polish(D, j, x, z, k, bound):
    """Exact optimum on a guessed support when it passes the KKT check."""
    for support in _candidate_supports(x, z, k):
        c = _support_fit(D, j, support, bound)
        if c is not None and _kkt_certificate(D, j, c):
            return c
    return None


def _solve_columns(D, cols, settings):
    D = as_matrix(D, "D")
    n = D.shape[1]
    cols = np.asarray(cols, dtype=int)
    out = np.zeros((cols.size, n))
    residuals = np.zeros(cols.size)
    infeasible = np.zeros(cols.size, dtype=bool)
    iterations = np.zeros(cols.size, dtype=int)
    nonzero = np.flatnonzero(np.linalg.norm(D[:, cols], axis=0) > 0)
    if nonzero.size:
        sys = _ColumnSystems(D, cols[nonzero], settings)
        ranks = np.count_nonzero(sys.s, axis=1)
        bounds = settings.eps_rel * sys.dnorm + RESIDUAL_FLOOR * np.maximum(1.0, sys.dnorm)
        exact = settings.polish and settings.eps_rel == 0.0
        gap_tol = max(settings.gap_tol, 1e-9)

        def finish(rows, gs):
            found = {}
            for row, g in zip(rows, gs):
                if sys.infeasible[row]:
                    continue
                c = _dual_finish(D, sys.cols[row], g, bounds[row], gap_tol)
                if c is not None:
                    found[int(row)] = c
            return found

        x, z, u, iters, finished = _admm(sys, settings, finish if exact else None)
        for row, k in enumerate(nonzero):
            j = cols[k]
            c = finished.get(row)
            if c is None and exact and not sys.infeasible[row]:
                c = _dual_finish(D, j, settings.rho * u[row], bounds[row], gap_tol)
                if c is None and settings.lp_fallback and iters[row] >= settings.max_iters:
                    c = _lp_column(D, j, bounds[row])
            if c is None:
                if settings.polish:
                    c = _polish(D, x[row], z[row], j, ranks[row], bounds[row], exact and not sys.infeasible[row])
                else:
                    c = x[row]
            c = c.copy()
            c[j] = 0.0
            out[k] = c
            residuals[k] = _residual(D, c, j)
            infeasible[k] = sys.infeasible[row]
            iterations[k] = iters[row]
    return out, residuals, infeasible, iterations


def _polish(D, x, z, j, k, bound, exact):
    if exact:
        c = _certified_polish(D, j, x, z, k, bound)
        if c is not None:
            return c
    for support in _candidate_supports(x, z, k):
        c = _support_fit(D, j, support, bound)
        if c is not None and np.abs(c).sum() <= np.abs(x).sum() * (1 + 1e-12):
            return c
    return x


def solve_column(D, j, settings=None):
    """Sparsest (l1) expression of column ``j`` of ``D`` by the others.

    Returns
    -------
    c : ndarray, shape (n,)
        Coefficients with ``c[j] == 0``.
    residual : float
        ``||D c - d_j||_2``.
    infeasible : bool
        True when ``d_j`` is farther than the allowed slack from the span of
        the other columns; ``c`` is then the least-squares-constrained answer.
    """
    settings = settings or ExpressionSettings()
    c, res, bad, _ = _solve_columns(D, [j], settings)
    return c[0], float(res[0]), bool(bad[0])


def update_expression(X, settings=None, columns=None):
    """Solve every column subproblem for dictionary ``X`` and assemble ``C``."""
    settings = settings or ExpressionSettings()
    X = as_matrix(X, "X")
    n = X.shape[1]
    cols = np.arange(n) if columns is None else np.asarray(columns, dtype=int)
    coeffs, residuals, infeasible, iterations = _solve_columns(X, cols, settings)
    C = np.zeros((n, n))
    C[:, cols] = coeffs.T
    C[np.arange(n), np.arange(n)] = 0.0
    full_res = np.zeros(n)
    full_bad = np.zeros(n, dtype=bool)
    full_it = np.zeros(n, dtype=int)
    full_res[cols], full_bad[cols], full_it[cols] = residuals, infeasible, iterations
    return ExpressionMatrix(C, full_res, full_bad, full_it)


def init_expression(Bprime, settings=None):
    """Initial expression matrix from a basis estimate ``B'`` (``n x r``).

    Uses the dictionary ``B'.T``, so each column of ``C0`` expresses one row of
    ``B'`` through the other rows.
    """
    Bprime = as_matrix(Bprime, "Bprime")
    return update_expression(Bprime.T, settings)
