"""Command-line front end: generate problems, run solves and sweeps, emit
figure CSVs, and re-verify stored runs."""

import argparse
import json
import sys
from pathlib import Path

from .experiments import (
    CANONICAL_PROBLEM_IDS,
    DEFAULT_CHANNELS,
    ExperimentSpec,
    emit_constant_figures,
    emit_weight_figures,
    generate_canonical_problem,
    run_diagnostics,
    run_suite,
    spectrum_from_file,
)
from .quadratic import QuadraticProblem, build_problem, initial_point
from .solver import SolveTrace, SolverConfig, run_lmsd


def _cmd_generate(args):
    if args.spectrum_file is not None:
        problem = build_problem(
            spectrum_from_file(args.spectrum_file), seed=args.seed, b_mode=args.b_mode
        )
    else:
        problem = generate_canonical_problem(
            args.problem, n=args.n, seed=args.seed, b_mode=args.b_mode
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    problem.save(out)
    print(f"wrote {out} (n={problem.n}, seed={problem.seed})")
    return 0


def _cmd_solve(args):
    problem = QuadraticProblem.load(args.problem_file)
    if args.config is not None:
        config = SolverConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    else:
        config = SolverConfig(
            m=args.m,
            epsilon=args.epsilon,
            rho=args.rho,
            tk_route=args.route,
            stepsize_seed=args.seed,
            max_total_iterations=args.max_iterations,
        )
    trace = run_lmsd(problem, config, x0=initial_point(problem, seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.save(out / "trace.json")
    trace.to_csv(out / "trace.csv")
    print(
        f"{trace.status}: cycles={len(trace.cycles)} "
        f"inner={trace.total_inner_iterations} final_grad={trace.final_gradient_norm:.3e}"
    )
    return 0


def _cmd_suite(args):
    if args.config is not None:
        spec = ExperimentSpec.from_json(Path(args.config).read_text(encoding="utf-8"))
        if args.out is not None:
            spec.out_dir = args.out
    else:
        problems = [int(p) if p.isdigit() else p for p in args.problems]
        seeds = args.seeds if args.seeds else list(range(args.num_seeds))
        spec = ExperimentSpec(
            problems=problems,
            n=args.n,
            m_values=args.m_values,
            epsilon=args.epsilon,
            seeds=seeds,
            tk_route=args.route,
            rho=args.rho,
            out_dir=args.out if args.out is not None else "runs",
        )
    rows = run_suite(spec)
    converged = sum(1 for r in rows if r.status in ("converged", "finite-termination"))
    print(f"{len(rows)} runs -> {Path(spec.out_dir) / 'summary.csv'} ({converged} converged)")
    return 0


def _cmd_figures(args):
    trace = SolveTrace.load(args.trace)
    problem = QuadraticProblem.load(args.problem_file)
    out = Path(args.out)
    cycle_path, all_path = emit_weight_figures(
        trace, problem, out, stem=args.stem, channels=tuple(args.channels)
    )
    constants_path = emit_constant_figures(
        problem.spectrum, trace.m, out / f"{args.stem}_constants.csv"
    )
    print(f"wrote {cycle_path}, {all_path}, {constants_path}")
    return 0


def _cmd_diagnose(args):
    if len(args.trace) != len(args.problem_file):
        print("diagnose needs one problem file per trace file", file=sys.stderr)
        return 2
    report = run_diagnostics(args.trace, args.problem_file)
    text = json.dumps(report, indent=2)
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out} (pass={report['pass']})")
    else:
        print(text)
    return 0 if report["pass"] else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lmsd",
        description="Limited memory steepest descent on strongly convex quadratics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a problem instance as JSON")
    p.add_argument("--problem", type=int, choices=CANONICAL_PROBLEM_IDS, default=2)
    p.add_argument("--spectrum-file", default=None, help="custom spectrum JSON instead of --problem")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--b-mode", choices=("zero-minimizer", "random"), default="zero-minimizer")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_generate)

    p = sub.add_parser("solve", help="run the solver on a stored problem")
    p.add_argument("--problem-file", required=True)
    p.add_argument("--config", default=None, help="SolverConfig JSON; overrides solver flags")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--route", choices=("direct", "cholesky", "qr"), default="cholesky")
    p.add_argument("--rho", type=float, default=1e8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("suite", help="sweep problems, history lengths, and seeds")
    p.add_argument("--config", default=None, help="ExperimentSpec JSON; overrides sweep flags")
    p.add_argument("--problems", nargs="+", default=[str(i) for i in CANONICAL_PROBLEM_IDS])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--m-values", type=int, nargs="+", default=[1, 5])
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--num-seeds", type=int, default=20)
    p.add_argument("--route", choices=("direct", "cholesky", "qr"), default="cholesky")
    p.add_argument("--rho", type=float, default=1e8)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_suite)

    p = sub.add_parser("figures", help="emit weight and constant CSVs for a stored run")
    p.add_argument("--trace", required=True)
    p.add_argument("--problem-file", required=True)
    p.add_argument("--channels", type=int, nargs="+", default=list(DEFAULT_CHANNELS))
    p.add_argument("--stem", default="weights")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_figures)

    p = sub.add_parser("diagnose", help="re-verify stored runs; exit 1 on any failure")
    p.add_argument("--trace", nargs="+", required=True)
    p.add_argument("--problem-file", nargs="+", required=True)
    p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p.set_defaults(handler=_cmd_diagnose)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
