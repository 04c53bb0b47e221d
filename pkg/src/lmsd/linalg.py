"""Dense linear-algebra kernels for the solver and its diagnostics.

All factorizations used by the stepsize harvest (Householder QR, partially
extended Cholesky, triangular solves, a small symmetric eigensolver) are
implemented here rather than delegated to LAPACK wrappers, so their failure
modes (rank deficiency, nonpositive pivots, singular triangles) surface as
typed signals the solver's fallback logic can act on.  NumPy arrays are the
storage format; matrices are float64 and row-major.

Sizes are modest by design: problem dimension n up to a few thousand,
history length m up to a few dozen.
"""

import math

import numpy as np

# Diagonal entries of R below this multiple of ||G||_F flag rank deficiency.
RANK_DEFICIENCY_RTOL = 1e-14

# Cap for the small symmetric eigensolver; the solver needs m ~ 1-10.
MAX_EIG_DIM = 64

_EPS = np.finfo(float).eps


class RankDeficiencyError(ArithmeticError):
    """A factorization found a (numerically) dependent column.

    ``index`` is the 0-based column/pivot index that failed.
    """

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"rank deficiency detected at column {index}")


class SingularMatrixError(ArithmeticError):
    """A triangular matrix with a zero diagonal entry cannot be inverted."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"zero diagonal entry at index {index}")


def as_matrix(M, name="matrix"):
    """Validate and convert to a 2-D float64 array with finite entries."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={A.ndim}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be nonempty, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains nonfinite entries")
    return A


def as_vector(v, name="vector"):
    """Validate and convert to a 1-D float64 array with finite entries."""
    x = np.asarray(v, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got ndim={x.ndim}")
    if x.size < 1:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains nonfinite entries")
    return x


def matvec(M, v):
    """Matrix-vector product M @ v with dimension checking."""
    A = as_matrix(M, "M")
    x = as_vector(v, "v")
    if A.shape[1] != x.size:
        raise ValueError(f"dimension mismatch: M is {A.shape}, v has length {x.size}")
    return A @ x


def thin_qr(G):
    """Thin QR factorization by Householder reflections.

    Parameters
    ----------
    G : (n, m) array_like, n >= m
        Matrix to factor.

    Returns
    -------
    Q : (n, m) ndarray
        Orthonormal columns.
    R : (m, m) ndarray
        Upper triangular with nonnegative diagonal, so the factorization
        is unique and matches the Cholesky factor of G^T G up to rounding.

    Raises
    ------
    RankDeficiencyError
        If any diagonal entry of R falls below
        ``RANK_DEFICIENCY_RTOL * ||G||_F``; carries the offending column.
    """
    A = as_matrix(G, "G")
    n, m = A.shape
    if n < m:
        raise ValueError(f"thin_qr needs n >= m, got shape {A.shape}")
    scale = np.linalg.norm(A)

    W = A.copy()
    reflectors = []  # unit Householder vectors, one per column
    for k in range(m):
        x = W[k:, k]
        nx = np.linalg.norm(x)
        if nx == 0.0:
            reflectors.append(None)
            continue
        v = x.copy()
        v[0] += math.copysign(nx, x[0]) if x[0] != 0.0 else nx
        nv = np.linalg.norm(v)
        if nv == 0.0:
            reflectors.append(None)
            continue
        w = v / nv
        W[k:, k:] -= 2.0 * np.outer(w, w @ W[k:, k:])
        reflectors.append(w)

    R = np.triu(W[:m, :m]).copy()

    # Assemble the thin Q by applying the reflectors to the first m columns
    # of the identity, newest reflector first.
    Q = np.zeros((n, m))
    Q[:m, :m] = np.eye(m)
    for k in range(m - 1, -1, -1):
        w = reflectors[k]
        if w is not None:
            Q[k:, :] -= 2.0 * np.outer(w, w @ Q[k:, :])

    # Sign convention: nonnegative diagonal of R.  Flipping row k of R and
    # column k of Q leaves the product unchanged.
    for k in range(m):
        if R[k, k] < 0.0:
            R[k, :] = -R[k, :]
            Q[:, k] = -Q[:, k]

    for k in range(m):
        if R[k, k] < RANK_DEFICIENCY_RTOL * scale:
            raise RankDeficiencyError(k)
    return Q, R


def partially_extended_cholesky(S):
    """Factor S = G^T [G g+] into R^T [R r].

    The left m-by-m block of S must be symmetric positive definite (only its
    upper triangle is read).  Returns the upper-triangular Cholesky factor R
    of that block and the vector r solving R^T r = S[:, m].

    Raises
    ------
    RankDeficiencyError
        On a nonpositive pivot, or one negligible relative to the trace of
        the Gram block; carries the pivot index.
    """
    A = as_matrix(S, "S")
    m, cols = A.shape
    if cols != m + 1:
        raise ValueError(f"S must be m-by-(m+1), got shape {A.shape}")

    # The deficiency threshold lives in squared space here: the Gram block
    # carries ||G||_F^2 on its trace, and a dependent column shows up as a
    # pivot of roundoff size relative to that, not as a ~1e-14 diagonal.
    sq_scale = max(np.trace(A[:, :m]), 0.0)

    R = np.zeros((m, m))
    for i in range(m):
        pivot = A[i, i] - R[:i, i] @ R[:i, i]
        if pivot <= RANK_DEFICIENCY_RTOL * sq_scale:
            raise RankDeficiencyError(i, f"nonpositive or negligible Cholesky pivot at index {i}")
        R[i, i] = math.sqrt(pivot)
        if i + 1 < m:
            R[i, i + 1 :] = (A[i, i + 1 : m] - R[:i, i] @ R[:i, i + 1 :]) / R[i, i]

    # Forward substitution on the lower-triangular R^T.
    s = A[:, m]
    r = np.zeros(m)
    for i in range(m):
        r[i] = (s[i] - R[:i, i] @ r[:i]) / R[i, i]
    return R, r


def solve_upper_triangular(R, B):
    """Solve R X = B by back substitution for upper-triangular R.

    B may be a vector or a matrix; the result matches its shape.  A zero
    diagonal entry raises :class:`SingularMatrixError`.
    """
    A = as_matrix(R, "R")
    m, mc = A.shape
    if m != mc:
        raise ValueError(f"R must be square, got shape {A.shape}")
    rhs = np.asarray(B, dtype=float)
    vector_input = rhs.ndim == 1
    if vector_input:
        rhs = rhs[:, None]
    rhs = as_matrix(rhs, "B")
    if rhs.shape[0] != m:
        raise ValueError(f"dimension mismatch: R is {A.shape}, B has {rhs.shape[0]} rows")

    X = np.zeros_like(rhs)
    for i in range(m - 1, -1, -1):
        if A[i, i] == 0.0:
            raise SingularMatrixError(i)
        X[i] = (rhs[i] - A[i, i + 1 :] @ X[i + 1 :]) / A[i, i]
    return X[:, 0] if vector_input else X


def _solve_lower_transposed(R, B):
    # Forward substitution with R^T (R upper triangular); internal helper
    # for right-multiplication by R^{-1}.
    A = as_matrix(R, "R")
    m = A.shape[0]
    rhs = np.asarray(B, dtype=float)
    vector_input = rhs.ndim == 1
    if vector_input:
        rhs = rhs[:, None]
    X = np.zeros_like(rhs)
    for i in range(m):
        if A[i, i] == 0.0:
            raise SingularMatrixError(i)
        X[i] = (rhs[i] - A[:i, i] @ X[:i]) / A[i, i]
    return X[:, 0] if vector_input else X


def right_solve_upper_triangular(M, R):
    """Solve X R = M for X with R upper triangular (i.e. X = M R^{-1})."""
    return _solve_lower_transposed(R, as_matrix(M, "M").T).T


def _tridiagonalize(S):
    """Householder similarity reduction to tridiagonal form.

    Returns (d, e, Z) with d the diagonal, e the subdiagonal, and Z the
    accumulated orthogonal transform: Z^T S Z is tridiagonal.
    """
    m = S.shape[0]
    A = S.copy()
    Z = np.eye(m)
    for k in range(m - 2):
        x = A[k + 1 :, k]
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(nx, x[0]) if x[0] != 0.0 else nx
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        w = v / nv
        # Apply P = I - 2ww^T on both sides of the trailing block.
        A[k + 1 :, :] -= 2.0 * np.outer(w, w @ A[k + 1 :, :])
        A[:, k + 1 :] -= 2.0 * np.outer(A[:, k + 1 :] @ w, w)
        Z[:, k + 1 :] -= 2.0 * np.outer(Z[:, k + 1 :] @ w, w)
    d = np.diag(A).copy()
    e = np.zeros(m)
    if m > 1:
        e[: m - 1] = np.diag(A, -1)
    return d, e, Z


def _implicit_shift_ql(d, e, Z, max_sweeps=50):
    """Implicit-shift QL iteration on a symmetric tridiagonal matrix.

    ``d`` is the diagonal, ``e[i]`` couples d[i] and d[i+1] (e[m-1] unused),
    ``Z`` accumulates the rotations.  All three are updated in place.
    """
    m = d.size
    for l in range(m):
        sweeps = 0
        while True:
            mm = l
            while mm < m - 1:
                dd = abs(d[mm]) + abs(d[mm + 1])
                if abs(e[mm]) <= _EPS * dd:
                    break
                mm += 1
            if mm == l:
                break
            sweeps += 1
            if sweeps > max_sweeps:
                raise ArithmeticError("implicit-shift QL failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[mm] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            for i in range(mm - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    # Underflow in the rotation chain: deflate and retry.
                    d[i + 1] -= p
                    e[mm] = 0.0
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                col = Z[:, i + 1].copy()
                Z[:, i + 1] = s * Z[:, i] + c * col
                Z[:, i] = c * Z[:, i] - s * col
            else:
                d[l] -= p
                e[l] = g
                e[mm] = 0.0


def symmetric_eigenvalues_small(T):
    """Full eigendecomposition of a small symmetric matrix.

    The input is checked for symmetry (to 1e-10 relative), symmetrized, and
    reduced to tridiagonal form by Householder similarity; eigenvalues are
    then found by implicit-shift QL iteration with accumulated rotations.

    Returns
    -------
    values : (m,) ndarray
        Eigenvalues sorted in decreasing order.
    vectors : (m, m) ndarray
        Unit eigenvectors as columns, ordered to match ``values``.
    """
    A = as_matrix(T, "T")
    m, mc = A.shape
    if m != mc:
        raise ValueError(f"T must be square, got shape {A.shape}")
    if m > MAX_EIG_DIM:
        raise ValueError(f"T is {m}x{m}; this eigensolver is capped at {MAX_EIG_DIM}")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise ValueError("T is not symmetric to 1e-10 relative")

    S = 0.5 * (A + A.T)
    d, e, Z = _tridiagonalize(S)
    _implicit_shift_ql(d, e, Z)

    order = np.argsort(-d, kind="stable")
    values = d[order]
    vectors = Z[:, order]
    vectors /= np.linalg.norm(vectors, axis=0)
    return values, vectors


def inverse_norm_upper_triangular(R):
    """Spectral norm of R^{-1} for upper-triangular R.

    The inverse is formed explicitly (R is small) and its largest singular
    value returned, computed as the square root of the largest eigenvalue
    of (R^{-1})^T R^{-1}.
    """
    A = as_matrix(R, "R")
    m, mc = A.shape
    if m != mc:
        raise ValueError(f"R must be square, got shape {A.shape}")
    Rinv = solve_upper_triangular(A, np.eye(m))
    values, _ = symmetric_eigenvalues_small(Rinv.T @ Rinv)
    return math.sqrt(max(values[0], 0.0))


def random_orthogonal(n, seed):
    """Haar-distributed random orthogonal matrix, deterministic per seed.

    Obtained as the Q factor of a standard-normal matrix under the
    nonnegative-diagonal-R convention.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    Q, _ = thin_qr(G)
    return Q
