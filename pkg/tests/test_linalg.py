import math

import numpy as np
import pytest

from lmsd.linalg import (
    RankDeficiencyError,
    SingularMatrixError,
    inverse_norm_upper_triangular,
    matvec,
    partially_extended_cholesky,
    random_orthogonal,
    solve_upper_triangular,
    symmetric_eigenvalues_small,
    thin_qr,
)


def random_matrix_with_condition(rng, n, m, cond):
    """Build an n-by-m matrix with prescribed condition number."""
    U, _ = np.linalg.qr(rng.standard_normal((n, m)))
    V, _ = np.linalg.qr(rng.standard_normal((m, m)))
    sing = np.geomspace(1.0, 1.0 / cond, m)
    return U @ np.diag(sing) @ V.T


# ---------------------------------------------------------------------------
# matvec


def test_matvec_identity():
    assert np.array_equal(matvec(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_matvec_zero_matrix():
    assert np.array_equal(matvec(np.zeros((2, 2)), [5.0, -7.0]), [0.0, 0.0])


def test_matvec_diagonal_scaling():
    assert np.array_equal(matvec([[2.0, 0.0], [0.0, 3.0]], [1.0, 1.0]), [2.0, 3.0])


def test_matvec_dimension_mismatch():
    with pytest.raises(ValueError):
        matvec(np.eye(3), [1.0, 2.0])


def test_matvec_rejects_nonfinite():
    with pytest.raises(ValueError):
        matvec([[np.nan, 0.0], [0.0, 1.0]], [1.0, 1.0])


# ---------------------------------------------------------------------------
# thin_qr


def test_thin_qr_single_column():
    Q, R = thin_qr(np.array([[3.0], [4.0]]))
    assert np.allclose(Q, [[0.6], [0.8]], atol=1e-15)
    assert np.allclose(R, [[5.0]], atol=1e-15)


def test_thin_qr_orthogonal_scaled_columns():
    G = np.column_stack([2.0 * np.array([1.0, 0.0, 0.0]), 3.0 * np.array([0.0, 1.0, 0.0])])
    Q, R = thin_qr(G)
    assert np.allclose(R, np.diag([2.0, 3.0]), atol=1e-14)
    assert np.allclose(Q, G / [2.0, 3.0], atol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_thin_qr_reconstruction_random(seed):
    # Oracle: reassemble Q @ R and compare entrywise to G.
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((6, 3))
    Q, R = thin_qr(G)
    assert np.max(np.abs(Q @ R - G)) <= 1e-12 * np.linalg.norm(G)
    assert np.max(np.abs(Q.T @ Q - np.eye(3))) <= 1e-12 * 3
    assert np.all(np.diag(R) >= 0.0)
    assert np.allclose(R, np.triu(R), atol=0.0)


@pytest.mark.parametrize("seed", range(5))
def test_thin_qr_reconstruction_ill_conditioned(seed):
    rng = np.random.default_rng(100 + seed)
    G = random_matrix_with_condition(rng, 40, 8, 1e6)
    Q, R = thin_qr(G)
    assert np.linalg.norm(Q @ R - G) <= 1e-11 * np.linalg.norm(G)


def test_thin_qr_rank_deficiency_signal():
    g = np.array([1.0, 2.0, 2.0])
    with pytest.raises(RankDeficiencyError) as exc:
        thin_qr(np.column_stack([g, g]))
    assert exc.value.index == 1


def test_thin_qr_rejects_wide():
    with pytest.raises(ValueError):
        thin_qr(np.ones((2, 3)))


# ---------------------------------------------------------------------------
# partially_extended_cholesky


def test_cholesky_scalar():
    R, r = partially_extended_cholesky(np.array([[9.0, 3.0]]))
    assert np.allclose(R, [[3.0]])
    assert np.allclose(r, [1.0])


def test_cholesky_identity_block():
    S = np.column_stack([np.eye(2), np.array([1.0, 0.0])])
    R, r = partially_extended_cholesky(S)
    assert np.allclose(R, np.eye(2))
    assert np.allclose(r, [1.0, 0.0])


@pytest.mark.parametrize("seed", range(10))
def test_cholesky_reconstruction_random(seed):
    # Oracle: form S = G^T [G g+] directly and verify R^T R and R^T r.
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((5, 2))
    g_next = rng.standard_normal(5)
    S = G.T @ np.column_stack([G, g_next])
    R, r = partially_extended_cholesky(S)
    scale = np.linalg.norm(S)
    assert np.max(np.abs(R.T @ R - S[:, :2])) <= 1e-12 * scale
    assert np.max(np.abs(R.T @ r - S[:, 2])) <= 1e-12 * scale
    assert np.allclose(R, np.triu(R), atol=0.0)


def test_cholesky_nonpositive_pivot_signal():
    g = np.array([1.0, -1.0])
    G = np.column_stack([g, g])
    S = G.T @ np.column_stack([G, np.array([0.5, 0.5])])
    with pytest.raises(RankDeficiencyError) as exc:
        partially_extended_cholesky(S)
    assert exc.value.index == 1


def test_cholesky_consistency_with_qr():
    # Both factors use the nonnegative-diagonal convention, so they agree
    # directly for well-conditioned G.
    rng = np.random.default_rng(7)
    G = random_matrix_with_condition(rng, 30, 5, 1e3)
    g_next = rng.standard_normal(30)
    _, R_qr = thin_qr(G)
    R_chol, _ = partially_extended_cholesky(G.T @ np.column_stack([G, g_next]))
    assert np.max(np.abs(R_qr - R_chol)) <= 1e-8 * np.linalg.norm(G)


def test_cholesky_shape_check():
    with pytest.raises(ValueError):
        partially_extended_cholesky(np.eye(3))


# ---------------------------------------------------------------------------
# solve_upper_triangular


def test_solve_identity():
    B = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(solve_upper_triangular(np.eye(2), B), B)


def test_solve_2x2_by_hand():
    R = np.array([[2.0, 1.0], [0.0, 4.0]])
    x = solve_upper_triangular(R, np.array([5.0, 8.0]))
    assert np.allclose(x, [1.5, 2.0], atol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_solve_round_trip(seed):
    # Oracle: build B = R @ X, solve, recover X.
    rng = np.random.default_rng(seed)
    R = np.triu(rng.standard_normal((4, 4))) + 3.0 * np.eye(4)
    X = rng.standard_normal((4, 2))
    B = R @ X
    assert np.max(np.abs(solve_upper_triangular(R, B) - X)) <= 1e-12 * np.linalg.norm(X)


def test_solve_singular_signal():
    R = np.array([[1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(SingularMatrixError) as exc:
        solve_upper_triangular(R, np.array([1.0, 1.0]))
    assert exc.value.index == 1


# ---------------------------------------------------------------------------
# symmetric_eigenvalues_small


def test_eig_diagonal():
    values, vectors = symmetric_eigenvalues_small(np.diag([3.0, 1.0]))
    assert np.allclose(values, [3.0, 1.0])
    assert np.allclose(np.abs(vectors), np.eye(2), atol=1e-14)


def test_eig_2x2_closed_form():
    values, _ = symmetric_eigenvalues_small(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(values, [3.0, 1.0], atol=1e-14)


def test_eig_1x1():
    values, vectors = symmetric_eigenvalues_small(np.array([[7.5]]))
    assert values[0] == 7.5
    assert abs(abs(vectors[0, 0]) - 1.0) < 1e-15


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("m", [2, 3, 5, 8, 13])
def test_eig_residual_random(seed, m):
    # Oracle: per-pair residual ||T v - theta v|| and pairwise orthogonality.
    rng = np.random.default_rng(1000 * m + seed)
    T = rng.standard_normal((m, m))
    T = 0.5 * (T + T.T)
    values, vectors = symmetric_eigenvalues_small(T)
    scale = np.linalg.norm(T)
    assert np.all(np.diff(values) <= 1e-14 * max(scale, 1.0))
    for j in range(m):
        v = vectors[:, j]
        assert np.linalg.norm(T @ v - values[j] * v) <= 1e-10 * max(scale, 1.0)
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-12
    assert np.max(np.abs(vectors.T @ vectors - np.eye(m))) <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_eig_matches_numpy(seed):
    rng = np.random.default_rng(40 + seed)
    T = rng.standard_normal((6, 6))
    T = T + T.T
    values, _ = symmetric_eigenvalues_small(T)
    expected = np.sort(np.linalg.eigvalsh(T))[::-1]
    assert np.allclose(values, expected, atol=1e-10 * np.linalg.norm(T))


def test_eig_repeated_eigenvalues():
    # Multiplicity > 1 must still give an orthonormal basis.
    rng = np.random.default_rng(3)
    Q = np.linalg.qr(rng.standard_normal((5, 5)))[0]
    T = Q @ np.diag([4.0, 4.0, 4.0, 1.0, 1.0]) @ Q.T
    T = 0.5 * (T + T.T)
    values, vectors = symmetric_eigenvalues_small(T)
    assert np.allclose(values, [4.0, 4.0, 4.0, 1.0, 1.0], atol=1e-12)
    assert np.max(np.abs(vectors.T @ vectors - np.eye(5))) <= 1e-10


def test_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        symmetric_eigenvalues_small(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_eig_rejects_oversize():
    with pytest.raises(ValueError):
        symmetric_eigenvalues_small(np.eye(65))


# ---------------------------------------------------------------------------
# inverse_norm_upper_triangular


def test_inverse_norm_scalar():
    assert inverse_norm_upper_triangular(np.array([[2.0]])) == pytest.approx(0.5)


def test_inverse_norm_diagonal():
    assert inverse_norm_upper_triangular(np.diag([2.0, 4.0])) == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(10))
def test_inverse_norm_vs_svd_oracle(seed):
    # Oracle: brute-force largest singular value of the explicit inverse.
    rng = np.random.default_rng(seed)
    R = np.triu(rng.standard_normal((3, 3))) + 2.0 * np.eye(3)
    expected = np.linalg.svd(np.linalg.inv(R), compute_uv=False)[0]
    assert inverse_norm_upper_triangular(R) == pytest.approx(expected, rel=1e-12)


def test_inverse_norm_singular_signal():
    with pytest.raises(SingularMatrixError):
        inverse_norm_upper_triangular(np.array([[1.0, 1.0], [0.0, 0.0]]))


# ---------------------------------------------------------------------------
# random_orthogonal


def test_random_orthogonal_1x1():
    Q = random_orthogonal(1, seed=0)
    assert Q.shape == (1, 1)
    assert abs(abs(Q[0, 0]) - 1.0) < 1e-15


def test_random_orthogonal_deterministic():
    A = random_orthogonal(8, seed=123)
    B = random_orthogonal(8, seed=123)
    assert np.array_equal(A, B)
    C = random_orthogonal(8, seed=124)
    assert not np.array_equal(A, C)


def test_random_orthogonal_orthogonality():
    Q = random_orthogonal(50, seed=5)
    assert np.max(np.abs(Q.T @ Q - np.eye(50))) <= 1e-12 * 50


def test_random_orthogonal_rejects_bad_n():
    with pytest.raises(ValueError):
        random_orthogonal(0, seed=1)
