"""Limited memory steepest descent with Ritz-value stepsizes.

The iteration runs in cycles.  Each cycle applies a panel of stepsizes in
plain gradient steps, then projects the Hessian onto the span of the most
recent gradients and harvests the next panel as reciprocals of the
projection's eigenvalues (Ritz values).  The projection can be formed three
ways: directly from Hessian products, from a partially extended Cholesky
factorization of the Gram matrix, or from the thin QR factors; all agree in
exact arithmetic.

Degenerate windows (dependent gradient columns, nonpositive Ritz values, or
a triangular factor whose inverse violates the rho bound) are repaired by
dropping the oldest retained gradient and refactoring, down to a single
column if necessary; the next cycle is then shorter and memory regrows as
new gradients accumulate.
"""

import csv
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    RankDeficiencyError,
    SingularMatrixError,
    as_matrix,
    as_vector,
    inverse_norm_upper_triangular,
    partially_extended_cholesky,
    right_solve_upper_triangular,
    symmetric_eigenvalues_small,
    thin_qr,
)
from .quadratic import draw_initial_stepsizes, initial_point

TK_ROUTES = ("direct", "cholesky", "qr")

STATUS_CONVERGED = "converged"
STATUS_ITERATION_CAP = "iteration-cap"
STATUS_FINITE_TERMINATION = "finite-termination"
STATUS_FAILED = "failed"  # only on traces attached to SolverError

# Relative slack when checking harvested Ritz values against a known
# spectrum; violations indicate a numerically broken factorization.
RITZ_RANGE_RTOL = 1e-8

# Rounding slack for the rho bound check: a single-column window satisfies
# the bound exactly in real arithmetic and must never trip it.
RHO_CHECK_RTOL = 1e-12


class DegenerateRitzError(ArithmeticError):
    """Harvested Ritz values are unusable as stepsize reciprocals."""


class RhoBoundError(ArithmeticError):
    """||R^{-1}|| exceeded rho / ||g_first|| for the current window."""


class SolverError(RuntimeError):
    """Irrecoverable solver failure; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class SolverConfig:
    """Run parameters for :func:`run_lmsd`.

    Exactly one stepsize source must be given: an explicit list of 1..m
    positive initial stepsizes, or a seed from which m of them are drawn
    uniformly from [1/lambda_max, 1/lambda_min].
    """

    m: int
    epsilon: float = 1e-8
    rho: float = 1e8
    tk_route: str = "cholesky"
    initial_stepsizes: list | None = None
    stepsize_seed: int | None = None
    max_total_iterations: int | None = None  # defaults to 100 n at run time
    fallback_enabled: bool = True
    keep_history: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.rho < 1.0:
            raise ValueError(f"rho must be >= 1, got {self.rho}")
        if self.tk_route not in TK_ROUTES:
            raise ValueError(f"tk_route must be one of {TK_ROUTES}, got {self.tk_route!r}")
        if (self.initial_stepsizes is None) == (self.stepsize_seed is None):
            raise ValueError("exactly one of initial_stepsizes and stepsize_seed is required")
        if self.initial_stepsizes is not None:
            panel = [float(a) for a in self.initial_stepsizes]
            if not 1 <= len(panel) <= self.m:
                raise ValueError(f"initial_stepsizes must hold 1..m entries, got {len(panel)}")
            if any(not np.isfinite(a) or a <= 0.0 for a in panel):
                raise ValueError("initial stepsizes must be positive and finite")
            self.initial_stepsizes = panel
        if self.max_total_iterations is not None and self.max_total_iterations < 1:
            raise ValueError("max_total_iterations must be >= 1")

    def to_json(self):
        return json.dumps(
            {
                "m": self.m,
                "epsilon": self.epsilon,
                "rho": self.rho,
                "tk_route": self.tk_route,
                "initial_stepsizes": self.initial_stepsizes,
                "stepsize_seed": self.stepsize_seed,
                "max_total_iterations": self.max_total_iterations,
                "fallback_enabled": self.fallback_enabled,
                "keep_history": self.keep_history,
            }
        )

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


@dataclass
class FallbackEvent:
    """One dropped gradient column: which inner iteration it came from, why."""

    column_iteration: int
    reason: str


@dataclass
class CycleRecord:
    """Everything observed during one cycle and its end-of-cycle harvest.

    ``stepsizes`` are the panel used within the cycle, ``gradient_norms``
    the m+1 norms at its iterates (start plus one per step).  The harvest
    fields (``ritz_values`` in decreasing order, ``r_inv_norm``,
    ``columns_used``, ``window_iterations``) are None for a cycle that
    terminated before harvesting.
    """

    index: int
    stepsizes: list
    gradient_norms: list
    ritz_values: list | None = None
    r_inv_norm: float | None = None
    columns_used: int | None = None
    window_iterations: list | None = None
    fallback_events: list = field(default_factory=list)


@dataclass
class SolveTrace:
    """Full record of a solver run."""

    status: str
    final_x: np.ndarray
    cycles: list
    m: int
    epsilon: float
    rho: float
    tk_route: str
    iterates: list | None = None
    gradients: list | None = None

    @property
    def total_inner_iterations(self):
        return sum(len(c.stepsizes) for c in self.cycles)

    @property
    def final_gradient_norm(self):
        if not self.cycles:
            return None
        return self.cycles[-1].gradient_norms[-1]

    @property
    def cycle_start_gradient_norms(self):
        return [c.gradient_norms[0] for c in self.cycles]

    @property
    def stepsizes_flat(self):
        return [a for c in self.cycles for a in c.stepsizes]

    def to_json(self):
        payload = {
            "status": self.status,
            "m": self.m,
            "epsilon": self.epsilon,
            "rho": self.rho,
            "tk_route": self.tk_route,
            "final_x": self.final_x.tolist(),
            "final_gradient_norm": self.final_gradient_norm,
            "cycles": [
                {
                    "index": c.index,
                    "stepsizes": c.stepsizes,
                    "gradient_norms": c.gradient_norms,
                    "ritz_values": c.ritz_values,
                    "r_inv_norm": c.r_inv_norm,
                    "columns_used": c.columns_used,
                    "window_iterations": c.window_iterations,
                    "fallback_events": [
                        {"column_iteration": e.column_iteration, "reason": e.reason}
                        for e in c.fallback_events
                    ],
                }
                for c in self.cycles
            ],
            "history": None
            if self.gradients is None
            else {
                "iterates": [x.tolist() for x in self.iterates],
                "gradients": [g.tolist() for g in self.gradients],
            },
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        for key in ("status", "cycles", "final_x"):
            if key not in payload:
                raise ValueError(f"trace document is missing {key!r}")
        cycles = [
            CycleRecord(
                index=c["index"],
                stepsizes=c["stepsizes"],
                gradient_norms=c["gradient_norms"],
                ritz_values=c["ritz_values"],
                r_inv_norm=c["r_inv_norm"],
                columns_used=c["columns_used"],
                window_iterations=c["window_iterations"],
                fallback_events=[
                    FallbackEvent(e["column_iteration"], e["reason"])
                    for e in c["fallback_events"]
                ],
            )
            for c in payload["cycles"]
        ]
        history = payload.get("history")
        return cls(
            status=payload["status"],
            final_x=np.asarray(payload["final_x"], dtype=float),
            cycles=cycles,
            m=payload["m"],
            epsilon=payload["epsilon"],
            rho=payload["rho"],
            tk_route=payload["tk_route"],
            iterates=None if history is None else [np.asarray(x, float) for x in history["iterates"]],
            gradients=None if history is None else [np.asarray(g, float) for g in history["gradients"]],
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def to_csv(self, path):
        """One row per inner iteration: cycle, step, ||g||, stepsize, and the
        cycle's harvested Ritz values (semicolon-joined, empty if none)."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cycle", "step", "grad_norm", "stepsize", "ritz_values"])
            for c in self.cycles:
                ritz = "" if c.ritz_values is None else ";".join(f"{t:.17g}" for t in c.ritz_values)
                for j, alpha in enumerate(c.stepsizes, start=1):
                    writer.writerow(
                        [c.index, j, f"{c.gradient_norms[j - 1]:.17g}", f"{alpha:.17g}", ritz]
                    )


def build_gradient_matrix(gradients):
    """Stack gradient vectors as the columns of a dense matrix."""
    cols = [as_vector(g, "gradient") for g in gradients]
    if not cols:
        raise ValueError("at least one gradient is required")
    return np.column_stack(cols)


def build_stepsize_panel(stepsizes):
    """Bidiagonal matrix of reciprocal stepsizes.

    For a panel of length L the result J is (L+1)-by-L with
    J[j, j] = 1/a_j and J[j+1, j] = -1/a_j.
    """
    alphas = as_vector(stepsizes, "stepsizes")
    if np.any(alphas <= 0.0):
        raise ValueError("stepsizes must be positive")
    L = alphas.size
    J = np.zeros((L + 1, L))
    recip = 1.0 / alphas
    J[np.arange(L), np.arange(L)] = recip
    J[np.arange(1, L + 1), np.arange(L)] = -recip
    return J


def _assemble_projection(R, extension, J):
    # T = [R ext] J R^{-1}; shared tail of the cholesky and qr routes.
    M = np.column_stack([R, extension]) @ J
    return right_solve_upper_triangular(M, R)


def form_T_direct(problem, Q_k):
    """Hessian projection Q_k^T (A Q_k); the reference route, uses A products."""
    Q_k = as_matrix(Q_k, "Q_k")
    AQ = np.column_stack([problem.apply_hessian(Q_k[:, j]) for j in range(Q_k.shape[1])])
    return Q_k.T @ AQ


def form_T_cholesky(G, g_next, J):
    """Projection via the partially extended Cholesky factorization of
    G^T [G g_next]; avoids Hessian products and storing Q."""
    G = as_matrix(G, "G")
    g_next = as_vector(g_next, "g_next")
    S = G.T @ np.column_stack([G, g_next])
    R, r = partially_extended_cholesky(S)
    return _assemble_projection(R, r, J)


def form_T_qr(R, Q_k, g_next, J):
    """Projection via the thin QR factors of the gradient matrix."""
    R = as_matrix(R, "R")
    Q_k = as_matrix(Q_k, "Q_k")
    g_next = as_vector(g_next, "g_next")
    return _assemble_projection(R, Q_k.T @ g_next, J)


def _ritz_values(T, spectrum=None):
    """Decreasing eigenvalues (and vectors) of the symmetrized projection.

    Raises :class:`DegenerateRitzError` for nonpositive or nonfinite values,
    or values outside the known spectrum range beyond relative slack.
    """
    T = as_matrix(T, "T")
    S = 0.5 * (T + T.T)
    values, vectors = symmetric_eigenvalues_small(S)
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        raise DegenerateRitzError(f"nonpositive or nonfinite Ritz values: {values}")
    if spectrum is not None:
        lo = spectrum.lambda_min * (1.0 - RITZ_RANGE_RTOL)
        hi = spectrum.lambda_max * (1.0 + RITZ_RANGE_RTOL)
        if np.any(values < lo) or np.any(values > hi):
            raise DegenerateRitzError(
                f"Ritz values {values} escaped the spectrum range [{lo}, {hi}]"
            )
    return values, vectors


def harvest_stepsizes(T, spectrum=None):
    """Stepsizes for the next cycle: reciprocals of the Ritz values of T,
    returned in increasing order."""
    values, _ = _ritz_values(T, spectrum)
    return (1.0 / values).tolist()


class _Window:
    """Rolling window of the newest (iteration, gradient, stepsize) triples.

    Capacity m; pushing beyond capacity evicts the oldest entry, so after a
    full-length cycle the window holds exactly that cycle's gradients.
    """

    def __init__(self, m):
        self.entries = deque(maxlen=m)

    def push(self, iteration, gradient, stepsize):
        self.entries.append((iteration, gradient, stepsize))

    def __len__(self):
        return len(self.entries)

    @property
    def iterations(self):
        return [t for t, _, _ in self.entries]

    @property
    def gradients(self):
        return [g for _, g, _ in self.entries]

    @property
    def stepsizes(self):
        return [a for _, _, a in self.entries]

    @property
    def first_gradient_norm(self):
        return float(np.linalg.norm(self.entries[0][1]))


def fallback_drop_column(window):
    """Remove the oldest retained gradient column from the window.

    Returns the iteration index of the dropped column.  The caller decides
    when to invoke this (rank deficiency, degenerate Ritz values, or a rho
    bound violation); with one column left and a nonzero gradient no further
    drop is ever needed, since then R = ||g|| satisfies the bound at rho = 1.
    """
    if len(window.entries) <= 1:
        raise ValueError("cannot drop the last remaining column")
    t, _, _ = window.entries.popleft()
    return t


def _harvest(window, g_next, problem, config):
    """Factor the current window and harvest the next stepsize panel.

    Returns (stepsizes, ritz_values, r_inv_norm, columns_used,
    window_iterations, fallback_events).  Drops columns per the fallback
    policy until the factorization, the rho bound, and the Ritz values are
    all acceptable.
    """
    events = []
    while True:
        G = build_gradient_matrix(window.gradients)
        J = build_stepsize_panel(window.stepsizes)
        g_first_norm = window.first_gradient_norm
        try:
            if config.tk_route == "cholesky":
                S = G.T @ np.column_stack([G, g_next])
                R, r = partially_extended_cholesky(S)
                extension = r
                Q_k = None
            else:
                Q_k, R = thin_qr(G)
                extension = Q_k.T @ g_next
            r_inv_norm = inverse_norm_upper_triangular(R)
            if r_inv_norm * g_first_norm > config.rho * (1.0 + RHO_CHECK_RTOL):
                raise RhoBoundError(
                    f"||R^-1|| = {r_inv_norm:.3e} exceeds rho/||g|| = "
                    f"{config.rho / g_first_norm:.3e}"
                )
            if config.tk_route == "direct":
                T = form_T_direct(problem, Q_k)
            else:
                T = _assemble_projection(R, extension, J)
            values, _ = _ritz_values(T, problem.spectrum)
        except (RankDeficiencyError, SingularMatrixError, DegenerateRitzError, RhoBoundError) as exc:
            if not config.fallback_enabled or len(window) == 1:
                raise SolverError(f"stepsize harvest failed irrecoverably: {exc}") from exc
            reason = type(exc).__name__
            dropped = fallback_drop_column(window)
            events.append(FallbackEvent(column_iteration=dropped, reason=reason))
            continue
        stepsizes = (1.0 / values).tolist()
        return stepsizes, values.tolist(), r_inv_norm, len(window), window.iterations, events


def run_lmsd(problem, config, x0=None):
    """Run limited memory steepest descent on a quadratic problem.

    Parameters
    ----------
    problem : QuadraticProblem
    config : SolverConfig
    x0 : array_like, optional
        Start point.  Defaults to a seeded point at unit distance from the
        minimizer (seeded by ``config.stepsize_seed`` when set, else 0).

    Returns
    -------
    SolveTrace
        Status is ``converged`` once ||g|| <= epsilon (checked at the start
        point and after every inner step), ``finite-termination`` if the
        gradient vanished exactly, or ``iteration-cap``.

    Raises
    ------
    SolverError
        If the harvest fails with fallback disabled or on a single column;
        carries the partial trace on ``trace``.
    """
    if x0 is None:
        x0 = initial_point(problem, seed=config.stepsize_seed if config.stepsize_seed is not None else 0)
    x = as_vector(x0, "x0").copy()
    if x.size != problem.n:
        raise ValueError(f"x0 has length {x.size}, problem dimension is {problem.n}")

    cap = config.max_total_iterations
    if cap is None:
        cap = 100 * problem.n

    if config.initial_stepsizes is not None:
        panel = list(config.initial_stepsizes)
    else:
        panel = draw_initial_stepsizes(problem.spectrum, config.m, config.stepsize_seed)

    g = problem.gradient(x)
    g_norm = float(np.linalg.norm(g))
    iterates = [x.copy()] if config.keep_history else None
    gradients = [g.copy()] if config.keep_history else None
    cycles = []

    def make_trace(status):
        return SolveTrace(
            status=status,
            final_x=x.copy(),
            cycles=cycles,
            m=config.m,
            epsilon=config.epsilon,
            rho=config.rho,
            tk_route=config.tk_route,
            iterates=iterates,
            gradients=gradients,
        )

    def termination_status(norm):
        if norm == 0.0:
            return STATUS_FINITE_TERMINATION
        if norm <= config.epsilon:
            return STATUS_CONVERGED
        return None

    status = termination_status(g_norm)
    if status is not None:
        return make_trace(status)

    window = _Window(config.m)
    t = 0  # completed inner iterations
    k = 0
    while True:
        k += 1
        record = CycleRecord(index=k, stepsizes=[], gradient_norms=[g_norm])
        cycles.append(record)
        for alpha in panel:
            window.push(t, g, alpha)
            x = x - alpha * g
            g = problem.gradient(x)
            g_norm = float(np.linalg.norm(g))
            t += 1
            record.stepsizes.append(alpha)
            record.gradient_norms.append(g_norm)
            if config.keep_history:
                iterates.append(x.copy())
                gradients.append(g.copy())
            status = termination_status(g_norm)
            if status is not None:
                return make_trace(status)
            if t >= cap:
                return make_trace(STATUS_ITERATION_CAP)
        try:
            panel, ritz, r_inv_norm, used, window_iters, events = _harvest(
                window, g, problem, config
            )
        except SolverError as exc:
            exc.trace = make_trace(STATUS_FAILED)
            raise
        record.ritz_values = ritz
        record.r_inv_norm = r_inv_norm
        record.columns_used = used
        record.window_iterations = window_iters
        record.fallback_events = events
