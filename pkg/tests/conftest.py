import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mcside.manifold import make_manifold, point_from_ambient

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def min_norm_expression(D):
    """Zero-diagonal ``C`` with ``D C = D``, column ``j`` the min-norm fit by the other columns."""
    n = D.shape[1]
    C = np.zeros((n, n))
    for j in range(n):
        others = np.arange(n) != j
        C[others, j] = np.linalg.pinv(D[:, others]) @ D[:, j]
    return C


def random_instance(rng, m, n, r, k):
    """Manifold from a generic ``k x n`` dictionary (so ``q = n - k``) and a point on it."""
    D = rng.standard_normal((k, n))
    C = min_norm_expression(D)
    mfd = make_manifold(C, r, m)
    A = rng.standard_normal((m, r)) @ rng.standard_normal((r, k)) @ D
    return mfd, point_from_ambient(A, mfd)


def random_tangent(rng, mfd, X):
    """Tangent vector from the explicit parametrisation ``U M V' + U_p V' + U V_p'``.

    Any ``V_p`` orthogonal to ``V`` inside ``range(W)`` keeps the row space in
    ``range(W)``, so no projection is involved.
    """
    m, n, r = mfd.m, mfd.n, mfd.r
    U, V = X.U, X.V
    Mr = rng.standard_normal((r, r))
    Up = rng.standard_normal((m, r))
    Up -= U @ (U.T @ Up)
    Vp = rng.standard_normal((n, r))
    if mfd.constrained:
        Vp = mfd.W @ (mfd.W.T @ Vp)
    Vp -= V @ (V.T @ Vp)
    return U @ Mr @ V.T + Up @ V.T + U @ Vp.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
