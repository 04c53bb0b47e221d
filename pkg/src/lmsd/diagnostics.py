"""Convergence diagnostics for finished solver traces.

Every quantity the convergence analysis attaches to a run is computed here
from the trace and the problem's known spectrum: eigenvector weights of each
gradient, per-channel contraction constants, Ritz-vector consistency
residuals, and the empirical half-life of the cycle-start gradient norms.
The verifiers check the analysis' inequalities with small additive slack
(the statements are exact-arithmetic; roundoff is absorbed, genuine
violations are reported).
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    RankDeficiencyError,
    solve_upper_triangular,
    symmetric_eigenvalues_small,
    thin_qr,
)
from .solver import form_T_direct

# Additive slack, scaled by the local gradient norm, for inequality checks.
INEQUALITY_SLACK = 1e-9

# Relative slack for eigenvalue bracket checks.
BRACKET_RTOL = 1e-8


@dataclass
class ContractionConstants:
    """Per-step and per-cycle weight contraction factors.

    ``delta[j-1, i-1]`` bounds the factor applied to weight channel i by the
    j-th (sorted) stepsize of a full cycle; ``Delta_i`` is the per-cycle
    product; ``Delta`` its maximum; ``hat_delta[j-1, p-1]`` the running
    maximum of delta over channels 1..p.
    """

    m: int
    delta: np.ndarray
    Delta_i: np.ndarray
    Delta: float
    hat_delta: np.ndarray


def compute_contraction_constants(spectrum, m):
    """Contraction table for a spectrum and full history length m."""
    lam = spectrum.eigenvalues
    n = lam.size
    if m < 1 or m > n:
        raise ValueError(f"m must be in [1, n], got {m} with n = {n}")
    low = lam[m - np.arange(1, m + 1)]  # lambda_{m+1-j}, j = 1..m
    high = lam[n - np.arange(1, m + 1)]  # lambda_{n+1-j}
    ratios_low = np.abs(1.0 - lam[None, :] / low[:, None])
    ratios_high = np.abs(1.0 - lam[None, :] / high[:, None])
    delta = np.maximum(ratios_low, ratios_high)
    Delta_i = np.prod(delta, axis=0)
    return ContractionConstants(
        m=m,
        delta=delta,
        Delta_i=Delta_i,
        Delta=float(np.max(Delta_i)),
        hat_delta=np.maximum.accumulate(delta, axis=1),
    )


def write_contraction_tables(constants, delta_path, big_delta_path):
    """CSV tables of the per-step and per-cycle contraction factors."""
    with open(delta_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "channel", "delta"])
        m, n = constants.delta.shape
        for j in range(m):
            for i in range(n):
                writer.writerow([j + 1, i + 1, f"{constants.delta[j, i]:.17g}"])
    with open(big_delta_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "Delta"])
        for i, value in enumerate(constants.Delta_i, start=1):
            writer.writerow([i, f"{value:.17g}"])


@dataclass
class ProofConstants:
    """Constants of the cycle-counting argument for one channel index p.

    ``epsilon_p`` and ``K_p`` are caller-supplied (their existence is
    established non-constructively); the three derived constants follow the
    displayed formulas verbatim.
    """

    p: int
    hat_delta_p: float
    hat_Delta_p1: float
    hat_K_p: int
    epsilon_p: float
    K_p: int
    rho: float


def compute_proof_constants(spectrum, m, p, epsilon_p, K_p, rho):
    """Evaluate the channel-(p+1) proof constants for given inputs.

    ``p`` is 1-based and must satisfy 1 <= p <= n-1; ``epsilon_p`` must lie
    in (0, 1/(2 hat_delta_p rho)) and ``K_p`` must be a positive integer.
    """
    lam = spectrum.eigenvalues
    n = lam.size
    if not 1 <= p <= n - 1:
        raise ValueError(f"p must be in [1, n-1], got {p}")
    if K_p < 1 or int(K_p) != K_p:
        raise ValueError(f"K_p must be a positive integer, got {K_p}")
    if rho < 1.0:
        raise ValueError(f"rho must be >= 1, got {rho}")
    constants = compute_contraction_constants(spectrum, m)
    hat_delta_jp = constants.hat_delta[:, p - 1]

    # 1 + sum over t of the running product of squared hat-deltas; the
    # printed sum, taken as printed (no square root).
    hat_delta_p = 1.0
    running = 1.0
    for j in range(m - 1):
        running *= hat_delta_jp[j] ** 2
        hat_delta_p += running

    upper = 1.0 / (2.0 * hat_delta_p * rho)
    if not 0.0 < epsilon_p < upper:
        raise ValueError(f"epsilon_p must lie in (0, {upper}), got {epsilon_p}")

    hat_Delta_p1 = max(1.0 / 3.0, 1.0 - lam[p] / lam[-1]) ** m
    Delta_p1 = float(constants.Delta_i[p])
    if Delta_p1 == 0.0:
        raise ValueError("Delta_{p+1} is zero; the ceiling formula is undefined")
    hat_K_p = math.ceil(
        math.log(2.0 * hat_delta_p * rho * epsilon_p * Delta_p1 ** (-(K_p + 1)))
        / math.log(hat_Delta_p1)
    )
    return ProofConstants(
        p=p,
        hat_delta_p=hat_delta_p,
        hat_Delta_p1=hat_Delta_p1,
        hat_K_p=int(hat_K_p),
        epsilon_p=epsilon_p,
        K_p=int(K_p),
        rho=rho,
    )


def weight_trace(trace, problem):
    """Eigenvector weights of every recorded gradient, rows indexed by
    inner iteration: W[t] = Q^T g_t."""
    if trace.gradients is None:
        raise ValueError("trace does not retain gradient history")
    G = np.column_stack(trace.gradients)
    return (problem.Q.T @ G).T


def _cycle_start_indices(trace):
    starts = []
    t = 0
    for c in trace.cycles:
        starts.append(t)
        t += len(c.stepsizes)
    return starts


@dataclass
class RecursionReport:
    max_residual: float
    threshold: float
    passed: bool


def verify_weight_recursion(trace, problem):
    """Check d_{t+1,i} = (1 - a_t lambda_i) d_{t,i} across the whole run."""
    W = weight_trace(trace, problem)
    lam = problem.spectrum.eigenvalues
    alphas = trace.stepsizes_flat
    max_residual = 0.0
    max_gnorm = max((float(np.linalg.norm(g)) for g in trace.gradients), default=0.0)
    for t, alpha in enumerate(alphas):
        predicted = (1.0 - alpha * lam) * W[t]
        residual = float(np.max(np.abs(W[t + 1] - predicted)))
        max_residual = max(max_residual, residual)
    threshold = 1e-10 * max_gnorm
    return RecursionReport(max_residual=max_residual, threshold=threshold, passed=max_residual <= threshold)


@dataclass
class InterlacingReport:
    violations: list
    cycles_checked: int
    passed: bool


def verify_interlacing(trace, spectrum):
    """Check every harvested Ritz value against its eigenvalue bracket.

    For a window of w columns the j-th largest Ritz value must lie in
    [lambda_{w+1-j}, lambda_{n+1-j}], up to relative slack.  Shortened
    windows are checked against brackets for their actual column count.
    """
    lam = spectrum.eigenvalues
    n = lam.size
    violations = []
    checked = 0
    for c in trace.cycles:
        if c.ritz_values is None:
            continue
        checked += 1
        w = c.columns_used
        for j, theta in enumerate(c.ritz_values, start=1):
            lo = lam[w - j] * (1.0 - BRACKET_RTOL)
            hi = lam[n - j] * (1.0 + BRACKET_RTOL)
            if theta < lo or theta > hi:
                violations.append(
                    {"cycle": c.index, "position": j, "theta": theta, "lo": lo, "hi": hi}
                )
    return InterlacingReport(violations=violations, cycles_checked=checked, passed=not violations)


@dataclass
class RitzConsistencyReport:
    max_unit_residual: float
    max_value_residual: float
    skipped_cycles: list
    cycles_checked: int
    passed: bool


def verify_ritz_identities(trace, problem, tolerance=1e-8):
    """Check theta = c^T Lambda c and ||c|| = 1 for the harvest vectors.

    c is rebuilt from the retained gradient history as D R^{-1} q per
    harvested cycle.  Cycles that dropped columns, or whose windows no
    longer factor, are recorded as skipped rather than failed.
    """
    if trace.gradients is None:
        raise ValueError("trace does not retain gradient history")
    lam = problem.spectrum.eigenvalues
    max_unit = 0.0
    max_value = 0.0
    skipped = []
    checked = 0
    for c in trace.cycles:
        if c.ritz_values is None:
            continue
        if c.fallback_events:
            skipped.append(c.index)
            continue
        G = np.column_stack([trace.gradients[t] for t in c.window_iterations])
        try:
            Q_k, R = thin_qr(G)
        except RankDeficiencyError:
            skipped.append(c.index)
            continue
        T = form_T_direct(problem, Q_k)
        values, vectors = symmetric_eigenvalues_small(0.5 * (T + T.T))
        D = problem.Q.T @ G
        C = D @ solve_upper_triangular(R, vectors)
        unit_residual = float(np.max(np.abs(np.sum(C * C, axis=0) - 1.0)))
        value_residual = float(np.max(np.abs(values - np.sum(lam[:, None] * C * C, axis=0))))
        max_unit = max(max_unit, unit_residual)
        max_value = max(max_value, value_residual)
        checked += 1
    passed = max_unit <= tolerance and max_value <= tolerance
    return RitzConsistencyReport(
        max_unit_residual=max_unit,
        max_value_residual=max_value,
        skipped_cycles=skipped,
        cycles_checked=checked,
        passed=passed,
    )


@dataclass
class ContractionReport:
    weight_violations: list
    norm_violations: list
    transitions_checked: int
    passed: bool


def _stepsizes_in_brackets(cycle, lam, m):
    # The contraction table assumes the cycle ran m sorted stepsizes, each
    # within its position's eigenvalue bracket (automatic for harvested
    # panels; a seeded first panel may or may not qualify).
    n = lam.size
    if len(cycle.stepsizes) != m:
        return False
    for pos, alpha in enumerate(cycle.stepsizes, start=1):
        lo = (1.0 / lam[n - pos]) * (1.0 - BRACKET_RTOL)
        hi = (1.0 / lam[m - pos]) * (1.0 + BRACKET_RTOL)
        if alpha < lo or alpha > hi:
            return False
    return True


def verify_cycle_contraction(trace, problem, constants=None):
    """Check the cycle-to-cycle weight and gradient-norm contraction bounds.

    |d_{k+1,j,i}| <= Delta_i |d_{k,j,i}| and ||g_{k+1,j}|| <= Delta ||g_{k,j}||
    are verified (with additive slack) for every transition whose two cycles
    both ran the full panel of m stepsizes inside their eigenvalue brackets;
    the bounds are not claimed for arbitrary seeded panels.
    """
    W = weight_trace(trace, problem)
    lam = problem.spectrum.eigenvalues
    m = trace.m
    if constants is None:
        constants = compute_contraction_constants(problem.spectrum, m)
    starts = _cycle_start_indices(trace)
    eligible = [_stepsizes_in_brackets(c, lam, m) for c in trace.cycles]
    weight_violations = []
    norm_violations = []
    transitions = 0
    for k in range(len(trace.cycles) - 1):
        if not (eligible[k] and eligible[k + 1]):
            continue
        transitions += 1
        c = trace.cycles[k]
        for j in range(m):
            t1 = starts[k] + j
            t2 = starts[k + 1] + j
            g_norm = c.gradient_norms[j]
            slack = INEQUALITY_SLACK * g_norm
            bound = constants.Delta_i * np.abs(W[t1]) + slack
            bad = np.where(np.abs(W[t2]) > bound)[0]
            for i in bad:
                weight_violations.append(
                    {"cycle": c.index, "position": j + 1, "channel": int(i) + 1,
                     "magnitude": float(abs(W[t2][i])), "bound": float(bound[i])}
                )
            next_norm = trace.cycles[k + 1].gradient_norms[j]
            if next_norm > constants.Delta * g_norm + slack:
                norm_violations.append(
                    {"cycle": c.index, "position": j + 1, "norm": next_norm,
                     "bound": constants.Delta * g_norm + slack}
                )
    passed = not weight_violations and not norm_violations
    return ContractionReport(
        weight_violations=weight_violations,
        norm_violations=norm_violations,
        transitions_checked=transitions,
        passed=passed,
    )


@dataclass
class HalfLifeReport:
    K_obs: int
    c1: float
    c2: float
    delta_measured: float
    envelope_ok: bool


def empirical_half_life(trace):
    """Smallest horizon K over which cycle-start gradient norms halve.

    Returns the horizon, the derived envelope constants c1 = 2 Delta^(K-1)
    and c2 = 2^(-1/K) (with the measured per-cycle growth factor Delta
    floored at 1 so the envelope derivation applies), and whether the
    envelope ||g_{k,1}|| <= c1 c2^k ||g_{1,1}|| held across the trace.
    """
    norms = trace.cycle_start_gradient_norms
    for idx, v in enumerate(norms):
        if v == 0.0:
            norms = norms[: idx + 1]  # envelope trivial once exactly zero
            break
    C = len(norms)
    if C < 2:
        raise ValueError("empirical half-life needs at least 2 cycles")
    K_obs = None
    for K in range(1, C):
        if all(norms[k + K] <= 0.5 * norms[k] for k in range(C - K)):
            K_obs = K
            break
    if K_obs is None:
        raise ValueError("no halving horizon observed within the trace")
    ratios = [norms[k + 1] / norms[k] for k in range(C - 1) if norms[k] > 0.0]
    delta_measured = max(1.0, max(ratios, default=1.0))
    c2 = 2.0 ** (-1.0 / K_obs)
    c1 = 2.0 * delta_measured ** (K_obs - 1)
    envelope_ok = all(
        norms[k - 1] <= c1 * c2**k * norms[0] * (1.0 + 1e-12) for k in range(1, C + 1)
    )
    return HalfLifeReport(
        K_obs=K_obs, c1=c1, c2=c2, delta_measured=delta_measured, envelope_ok=envelope_ok
    )


def diagnostics_report(trace, problem):
    """Run every verifier and aggregate a JSON-ready report."""
    report = {}

    recursion = verify_weight_recursion(trace, problem)
    report["weight_recursion"] = {
        "pass": recursion.passed,
        "max_residual": recursion.max_residual,
        "threshold": recursion.threshold,
    }

    interlacing = verify_interlacing(trace, problem.spectrum)
    report["interlacing"] = {
        "pass": interlacing.passed,
        "violations": interlacing.violations,
        "cycles_checked": interlacing.cycles_checked,
    }

    ritz = verify_ritz_identities(trace, problem)
    report["ritz_identities"] = {
        "pass": ritz.passed,
        "max_unit_residual": ritz.max_unit_residual,
        "max_value_residual": ritz.max_value_residual,
        "skipped_cycles": ritz.skipped_cycles,
        "cycles_checked": ritz.cycles_checked,
    }

    contraction = verify_cycle_contraction(trace, problem)
    report["cycle_contraction"] = {
        "pass": contraction.passed,
        "weight_violations": contraction.weight_violations,
        "norm_violations": contraction.norm_violations,
        "transitions_checked": contraction.transitions_checked,
    }

    if len(trace.cycles) < 2:
        report["half_life"] = {"pass": True, "skipped": "trace shorter than 2 cycles"}
    else:
        try:
            half = empirical_half_life(trace)
            report["half_life"] = {
                "pass": half.envelope_ok,
                "K_obs": half.K_obs,
                "c1": half.c1,
                "c2": half.c2,
                "delta_measured": half.delta_measured,
                "envelope_ok": half.envelope_ok,
            }
        except ValueError as exc:
            report["half_life"] = {"pass": False, "error": str(exc)}

    report["pass"] = all(section["pass"] for key, section in report.items() if key != "pass")
    return report
