"""Strongly convex quadratic test problems with known eigenstructure.

A problem is stored in factored form A = Q diag(lambda) Q^T with Q a seeded
random orthogonal matrix, so every diagnostic has access to the exact
spectrum and the exact eigenvector weights of any gradient.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_vector, random_orthogonal

B_MODES = ("zero-minimizer", "random")


@dataclass(frozen=True)
class Spectrum:
    """Ordered positive eigenvalues, multiplicities allowed."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        values = np.sort(as_vector(self.eigenvalues, "eigenvalues"))
        if values[0] <= 0.0:
            raise ValueError("eigenvalues must be strictly positive")
        object.__setattr__(self, "eigenvalues", values)

    @property
    def n(self):
        return self.eigenvalues.size

    @property
    def distinct_values(self):
        return np.unique(self.eigenvalues)

    @property
    def r(self):
        """Number of distinct eigenvalues."""
        return self.distinct_values.size

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])


@dataclass(frozen=True)
class QuadraticProblem:
    """Quadratic f(x) = x^T A x / 2 - b^T x with A = Q diag(lambda) Q^T.

    Immutable after construction; regenerable from (eigenvalues, seed,
    b_mode) alone, which is all the JSON serialization stores.
    """

    spectrum: Spectrum
    Q: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    x_star: np.ndarray = field(repr=False)
    seed: int
    b_mode: str

    @property
    def n(self):
        return self.spectrum.n

    def apply_hessian(self, v):
        """A @ v computed as Q (lambda * (Q^T v)); A is never formed."""
        x = as_vector(v, "v")
        if x.size != self.n:
            raise ValueError(f"dimension mismatch: expected length {self.n}, got {x.size}")
        return self.Q @ (self.spectrum.eigenvalues * (self.Q.T @ x))

    def gradient(self, x):
        """Objective gradient A x - b."""
        return self.apply_hessian(x) - self.b

    def weights(self, g):
        """Expansion coefficients of g in the eigenvector basis: d = Q^T g."""
        v = as_vector(g, "g")
        if v.size != self.n:
            raise ValueError(f"dimension mismatch: expected length {self.n}, got {v.size}")
        return self.Q.T @ v

    def objective(self, x):
        v = as_vector(x, "x")
        return 0.5 * float(v @ self.apply_hessian(v)) - float(self.b @ v)

    def dense_hessian(self):
        """Assemble A densely; for oracles and small-scale checks only."""
        return self.Q @ np.diag(self.spectrum.eigenvalues) @ self.Q.T

    def to_json(self):
        return json.dumps(
            {
                "n": self.n,
                "seed": self.seed,
                "eigenvalues": self.spectrum.eigenvalues.tolist(),
                "b_mode": self.b_mode,
            }
        )

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        return build_problem(
            Spectrum(np.asarray(payload["eigenvalues"], dtype=float)),
            seed=payload["seed"],
            b_mode=payload["b_mode"],
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def build_problem(spectrum, seed, b_mode="zero-minimizer"):
    """Construct a problem instance, deterministic per seed.

    ``zero-minimizer`` puts the minimizer at the origin (b = 0); ``random``
    draws a unit-norm minimizer and sets b = A x_star.  Gradient dynamics
    are translation invariant, so the two modes differ only in bookkeeping.
    """
    if b_mode not in B_MODES:
        raise ValueError(f"b_mode must be one of {B_MODES}, got {b_mode!r}")
    n = spectrum.n
    Q = random_orthogonal(n, seed)
    if b_mode == "zero-minimizer":
        x_star = np.zeros(n)
        b = np.zeros(n)
    else:
        rng = np.random.default_rng([seed, 1])
        x_star = rng.standard_normal(n)
        x_star /= np.linalg.norm(x_star)
        b = Q @ (spectrum.eigenvalues * (Q.T @ x_star))
    return QuadraticProblem(spectrum=spectrum, Q=Q, b=b, x_star=x_star, seed=seed, b_mode=b_mode)


def initial_point(problem, seed):
    """Seeded start point at unit distance from the minimizer."""
    rng = np.random.default_rng([seed, 2])
    step = rng.standard_normal(problem.n)
    step /= np.linalg.norm(step)
    return problem.x_star + step


def draw_initial_stepsizes(spectrum, m, seed):
    """m stepsizes drawn uniformly from [1/lambda_max, 1/lambda_min]."""
    rng = np.random.default_rng([seed, 3])
    lo = 1.0 / spectrum.lambda_max
    hi = 1.0 / spectrum.lambda_min
    return rng.uniform(lo, hi, size=m).tolist()
