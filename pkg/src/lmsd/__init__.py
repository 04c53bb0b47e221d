"""Limited memory steepest descent on strongly convex quadratics.

Cycles of plain gradient steps whose stepsizes are reciprocals of Ritz
values harvested from the previous cycle's gradients, plus the machinery
needed to measure why and how fast the iteration converges.
"""

from .linalg import (
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

__all__ = [
    "RankDeficiencyError",
    "SingularMatrixError",
    "inverse_norm_upper_triangular",
    "matvec",
    "partially_extended_cholesky",
    "random_orthogonal",
    "solve_upper_triangular",
    "symmetric_eigenvalues_small",
    "thin_qr",
]
