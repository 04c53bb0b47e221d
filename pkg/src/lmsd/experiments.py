"""Experiment harness: canonical spectra, solver sweeps, CSV emitters.

Five canonical 100-dimensional problems cover the interesting spectral
shapes: a narrow band (Q-linear regime), an even spread over two decades,
five tight clusters, one outlier above a cluster, and one outlier below.
Sweeps run each problem over seeds and history lengths, write per-run trace
files, and the diagnostics driver re-checks every convergence inequality on
the stored traces.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import compute_contraction_constants, diagnostics_report
from .quadratic import QuadraticProblem, Spectrum, build_problem, initial_point
from .solver import SolveTrace, SolverConfig, run_lmsd

CANONICAL_PROBLEM_IDS = (1, 2, 3, 4, 5)

DEFAULT_CHANNELS = (1, 2, 50, 100)

# (low, high) intervals of the five-cluster problem.
_CLUSTER_INTERVALS = ((1.0, 2.0), (25.0, 26.0), (50.0, 51.0), (75.0, 76.0), (99.0, 100.0))


def _progression(lo, hi, count):
    # Inclusive endpoints; a single point sits at the interval's low end.
    if count == 1:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def _chunk_sizes(n, parts):
    base, rem = divmod(n, parts)
    return [base + 1 if i < rem else base for i in range(parts)]


def canonical_spectrum(problem_id, n=100):
    """Spectrum of one of the five canonical test problems.

    1: evenly spread in [1, 1.9]; 2: evenly spread in [1, 100]; 3: five
    equal clusters in [1,2], [25,26], [50,51], [75,76], [99,100]; 4: all but
    one eigenvalue in [1, 2] plus a single 100; 5: a single 1 plus the rest
    in [99, 100].  Every block is an inclusive arithmetic progression.
    """
    if problem_id not in CANONICAL_PROBLEM_IDS:
        raise ValueError(f"problem id must be in {CANONICAL_PROBLEM_IDS}, got {problem_id}")
    if n < 5:
        raise ValueError(f"n must be >= 5, got {n}")
    if problem_id == 1:
        values = _progression(1.0, 1.9, n)
    elif problem_id == 2:
        values = _progression(1.0, 100.0, n)
    elif problem_id == 3:
        sizes = _chunk_sizes(n, 5)
        values = np.concatenate(
            [_progression(lo, hi, size) for (lo, hi), size in zip(_CLUSTER_INTERVALS, sizes)]
        )
    elif problem_id == 4:
        values = np.append(_progression(1.0, 2.0, n - 1), 100.0)
    else:
        values = np.append(1.0, _progression(99.0, 100.0, n - 1))
    return Spectrum(values)


def generate_canonical_problem(problem_id, n=100, seed=0, b_mode="zero-minimizer"):
    """Build one of the canonical problems with a seeded eigenbasis."""
    return build_problem(canonical_spectrum(problem_id, n), seed=seed, b_mode=b_mode)


def spectrum_from_file(path):
    """Load a custom spectrum from a JSON document {"eigenvalues": [...]}."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if "eigenvalues" not in payload:
        raise ValueError(f"{path} does not contain an 'eigenvalues' field")
    return Spectrum(np.asarray(payload["eigenvalues"], dtype=float))


def _resolve_spectrum(problem, n):
    # Canonical id (int) or a path to a spectrum file.
    if isinstance(problem, int):
        return canonical_spectrum(problem, n), str(problem)
    spectrum = spectrum_from_file(problem)
    return spectrum, Path(problem).stem


@dataclass
class ExperimentSpec:
    """A sweep over (problem, history length, seed) triples."""

    problems: list = field(default_factory=lambda: list(CANONICAL_PROBLEM_IDS))
    n: int = 100
    m_values: list = field(default_factory=lambda: [1, 5])
    epsilon: float = 1e-8
    seeds: list = field(default_factory=lambda: list(range(20)))
    tk_route: str = "cholesky"
    rho: float = 1e8
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if not self.m_values:
            raise ValueError("m_values must be nonempty")
        if self.n < max(self.m_values):
            raise ValueError("n must be at least the largest history length")

    def to_json(self):
        return json.dumps(
            {
                "problems": self.problems,
                "n": self.n,
                "m_values": self.m_values,
                "epsilon": self.epsilon,
                "seeds": self.seeds,
                "tk_route": self.tk_route,
                "rho": self.rho,
                "out_dir": self.out_dir,
            }
        )

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


@dataclass
class SummaryRow:
    problem_id: str
    m: int
    seed: int
    cycles: int
    inner_iterations: int
    status: str


def _replace_into(path, text):
    # Atomic publish: write beside the target, then rename over it.
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def run_single(problem, m, seed, epsilon=1e-8, tk_route="cholesky", rho=1e8):
    """One seeded run: seeded start point and seeded initial stepsizes."""
    cfg = SolverConfig(
        m=m, epsilon=epsilon, rho=rho, tk_route=tk_route, stepsize_seed=seed
    )
    return run_lmsd(problem, cfg, x0=initial_point(problem, seed=seed))


def run_suite(spec):
    """Run the sweep, write per-run artifacts and a summary CSV.

    Each (problem, m, seed) run gets a directory holding problem.json,
    trace.json (with full history), and trace.csv.  Returns the summary
    rows in execution order.
    """
    out_root = Path(spec.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    for problem_entry in spec.problems:
        spectrum, label = _resolve_spectrum(problem_entry, spec.n)
        for m in spec.m_values:
            for seed in spec.seeds:
                problem = build_problem(spectrum, seed=seed)
                trace = run_single(
                    problem, m, seed, epsilon=spec.epsilon, tk_route=spec.tk_route, rho=spec.rho
                )
                run_dir = out_root / f"p{label}_m{m}_s{seed}"
                run_dir.mkdir(parents=True, exist_ok=True)
                _replace_into(run_dir / "problem.json", problem.to_json())
                _replace_into(run_dir / "trace.json", trace.to_json())
                trace.to_csv(run_dir / "trace.csv")
                rows.append(
                    SummaryRow(
                        problem_id=label,
                        m=m,
                        seed=seed,
                        cycles=len(trace.cycles),
                        inner_iterations=trace.total_inner_iterations,
                        status=trace.status,
                    )
                )
    lines = ["problem,m,seed,cycles,inner_iterations,status"]
    lines += [
        f"{r.problem_id},{r.m},{r.seed},{r.cycles},{r.inner_iterations},{r.status}"
        for r in rows
    ]
    _replace_into(out_root / "summary.csv", "\n".join(lines) + "\n")
    return rows


def _log10_magnitude(value):
    mag = abs(value)
    return "-inf" if mag == 0.0 else f"{np.log10(mag):.17g}"


def emit_weight_figures(trace, problem, out_dir, stem="weights", channels=DEFAULT_CHANNELS):
    """Write the two weight-magnitude CSVs for the requested channels.

    ``<stem>_cycle_start.csv`` has one row per (cycle, channel) with the
    log10 magnitude of the weight at the cycle's first iterate;
    ``<stem>_all.csv`` covers every inner iterate.  Channels are 1-based
    eigenvalue indices; exact zeros are written as the string ``-inf``.
    """
    if trace.gradients is None:
        raise ValueError("trace does not retain gradient history")
    for i in channels:
        if not 1 <= i <= problem.n:
            raise ValueError(f"channel {i} outside valid range 1..{problem.n}")
    W = (problem.Q.T @ np.column_stack(trace.gradients)).T
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cycle_path = out_dir / f"{stem}_cycle_start.csv"
    all_path = out_dir / f"{stem}_all.csv"

    starts = []
    t = 0
    for c in trace.cycles:
        starts.append(t)
        t += len(c.stepsizes)

    lines = ["cycle,channel,log10_weight"]
    for c, start in zip(trace.cycles, starts):
        for i in channels:
            lines.append(f"{c.index},{i},{_log10_magnitude(W[start][i - 1])}")
    _replace_into(cycle_path, "\n".join(lines) + "\n")

    lines = ["cycle,step,channel,log10_weight"]
    for idx, (c, start) in enumerate(zip(trace.cycles, starts)):
        # Positions 1..L per cycle; the handoff point belongs to the next
        # cycle, so only the final cycle also emits its closing gradient.
        steps = len(c.stepsizes)
        if idx == len(trace.cycles) - 1:
            steps += 1
        for j in range(steps):
            for i in channels:
                lines.append(f"{c.index},{j + 1},{i},{_log10_magnitude(W[start + j][i - 1])}")
    _replace_into(all_path, "\n".join(lines) + "\n")
    return cycle_path, all_path


def emit_constant_figures(spectrum, m, out_path):
    """Write the per-channel cycle contraction constants as CSV rows
    (channel, Delta, below_one)."""
    constants = compute_contraction_constants(spectrum, m)
    lines = ["channel,Delta,below_one"]
    for i, value in enumerate(constants.Delta_i, start=1):
        lines.append(f"{i},{value:.17g},{str(bool(value < 1.0)).lower()}")
    _replace_into(Path(out_path), "\n".join(lines) + "\n")
    return Path(out_path)


def run_diagnostics(trace_paths, problem_paths):
    """Re-verify stored runs; one report per (trace, problem) pair.

    The aggregate ``pass`` is true only if every per-run report passed.
    """
    trace_paths = [Path(p) for p in trace_paths]
    problem_paths = [Path(p) for p in problem_paths]
    if len(trace_paths) != len(problem_paths):
        raise ValueError(
            f"got {len(trace_paths)} traces but {len(problem_paths)} problems"
        )
    runs = []
    for trace_path, problem_path in zip(trace_paths, problem_paths):
        entry = {"trace": str(trace_path), "problem": str(problem_path)}
        try:
            trace = SolveTrace.load(trace_path)
            problem = QuadraticProblem.load(problem_path)
            entry["report"] = diagnostics_report(trace, problem)
            entry["pass"] = entry["report"]["pass"]
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            entry["error"] = str(exc)
            entry["pass"] = False
        runs.append(entry)
    return {"runs": runs, "pass": all(r["pass"] for r in runs)}
