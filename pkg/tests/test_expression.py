import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from mcside.expression import (
    ExpressionSettings,
    init_expression,
    solve_column,
    update_expression,
)


def lp_oracle(D, j):
    """Column ``j`` of the l1 problem as an LP in ``(c+, c-)``, solved by HiGHS."""
    n = D.shape[1]
    others = [i for i in range(n) if i != j]
    A = D[:, others]
    k = len(others)
    res = linprog(np.ones(2 * k), A_eq=np.hstack([A, -A]), b_eq=D[:, j], bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def test_duplicate_columns():
    D = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    D = np.hstack([D, D[:, 2:3]])
    E = update_expression(D)
    assert E.C[1, 0] == pytest.approx(1.0, abs=1e-9) and E.C[0, 1] == pytest.approx(1.0, abs=1e-9)
    assert E.C[3, 2] == pytest.approx(1.0, abs=1e-9) and E.C[2, 3] == pytest.approx(1.0, abs=1e-9)
    assert E.objective == pytest.approx(4.0, abs=1e-8)
    assert np.all(np.diag(E.C) == 0.0)
    assert not E.infeasible.any()


def test_lone_column_is_flagged_infeasible():
    D = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 1.0]])
    c, res, bad = solve_column(D, 2)
    assert bad and res == pytest.approx(1.0, abs=1e-9)
    c, res, bad = solve_column(D, 0)
    assert not bad and c[1] == pytest.approx(0.5, abs=1e-9)


def test_sparsest_over_min_norm():
    # d_0 = d_1 + d_2 exactly, but d_3 alone also equals d_0
    D = np.array([[1.0, 1.0, 0.0, 1.0], [1.0, 0.0, 1.0, 1.0]])
    c, _, _ = solve_column(D, 0)
    assert np.abs(c).sum() == pytest.approx(1.0, abs=1e-9)
    assert c[3] == pytest.approx(1.0, abs=1e-9)


@given(st.integers(0, 10_000), st.integers(4, 8), st.integers(1, 3))
def test_matches_lp_oracle(seed, n, k):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((k, n))
    E = update_expression(D)
    for j in range(n):
        assert abs(E.column_l1[j] - lp_oracle(D, j)) <= 1e-6
    assert np.linalg.norm(D @ E.C - D) <= 1e-9 * np.linalg.norm(D)


@given(st.integers(0, 10_000))
def test_column_order_invariance(seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((3, 7))
    perm = rng.permutation(7)
    C = update_expression(D).C
    Cp = update_expression(D[:, perm]).C
    assert abs(np.abs(C).sum() - np.abs(Cp).sum()) <= 1e-8


def test_row_space_invariance(rng):
    D = rng.standard_normal((3, 8))
    T = rng.standard_normal((3, 3))
    a = update_expression(D).column_l1
    b = update_expression(T @ D).column_l1
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_slack_allows_inexact_fit(rng):
    D = rng.standard_normal((4, 6))
    exact = update_expression(D)
    loose = update_expression(D, ExpressionSettings(eps_rel=0.5))
    assert loose.objective <= exact.objective + 1e-9
    norms = np.linalg.norm(D, axis=0)
    assert np.all(loose.residuals <= 0.5 * norms * (1 + 1e-6) + 1e-9)


def test_init_expression_uses_rows_of_basis(rng):
    B = rng.standard_normal((10, 3))
    E = init_expression(B)
    assert E.C.shape == (10, 10)
    assert np.linalg.norm(B.T @ E.C - B.T) <= 1e-9 * np.linalg.norm(B)


def test_subset_of_columns(rng):
    D = rng.standard_normal((3, 7))
    full = update_expression(D)
    part = update_expression(D, columns=[1, 4])
    np.testing.assert_allclose(part.column_l1[[1, 4]], full.column_l1[[1, 4]], atol=1e-8)
    assert np.all(part.C[:, [0, 2, 3, 5, 6]] == 0)


def test_settings_validation():
    with pytest.raises(ValueError):
        ExpressionSettings(eps_rel=-1)
    with pytest.raises(ValueError):
        ExpressionSettings(relax=2.0)
    with pytest.raises(ValueError):
        ExpressionSettings(rho=0)


def test_diagnostics_csv(tmp_path, rng):
    E = update_expression(rng.standard_normal((2, 5)))
    E.write_diagnostics(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "column,l1,residual,flag" and len(lines) == 6
