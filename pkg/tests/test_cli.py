import json

from lmsd.cli import main


def test_generate_solve_figures_diagnose_chain(tmp_path):
    problem_path = tmp_path / "problem.json"
    assert main(
        ["generate", "--problem", "1", "--n", "50", "--seed", "3", "--out", str(problem_path)]
    ) == 0
    assert problem_path.exists()

    run_dir = tmp_path / "run"
    assert main(
        [
            "solve",
            "--problem-file", str(problem_path),
            "--m", "3",
            "--epsilon", "1e-8",
            "--seed", "3",
            "--out", str(run_dir),
        ]
    ) == 0
    assert (run_dir / "trace.json").exists()
    assert (run_dir / "trace.csv").exists()

    fig_dir = tmp_path / "figs"
    assert main(
        [
            "figures",
            "--trace", str(run_dir / "trace.json"),
            "--problem-file", str(problem_path),
            "--channels", "1", "2", "25",
            "--out", str(fig_dir),
        ]
    ) == 0
    assert (fig_dir / "weights_cycle_start.csv").exists()
    assert (fig_dir / "weights_all.csv").exists()
    assert (fig_dir / "weights_constants.csv").exists()

    report_path = tmp_path / "report.json"
    assert main(
        [
            "diagnose",
            "--trace", str(run_dir / "trace.json"),
            "--problem-file", str(problem_path),
            "--out", str(report_path),
        ]
    ) == 0
    report = json.loads(report_path.read_text())
    assert report["pass"]


def test_suite_command(tmp_path):
    out = tmp_path / "runs"
    assert main(
        [
            "suite",
            "--problems", "1",
            "--n", "30",
            "--m-values", "1",
            "--seeds", "0", "1",
            "--out", str(out),
        ]
    ) == 0
    assert (out / "summary.csv").exists()
    assert (out / "p1_m1_s0" / "trace.json").exists()


def test_suite_from_config_file(tmp_path):
    config = {
        "problems": [1],
        "n": 25,
        "m_values": [2],
        "epsilon": 1e-8,
        "seeds": [0],
        "tk_route": "qr",
        "rho": 1e8,
        "out_dir": str(tmp_path / "cfg_runs"),
    }
    config_path = tmp_path / "spec.json"
    config_path.write_text(json.dumps(config))
    assert main(["suite", "--config", str(config_path)]) == 0
    assert (tmp_path / "cfg_runs" / "summary.csv").exists()


def test_solve_with_config_file(tmp_path):
    problem_path = tmp_path / "p.json"
    main(["generate", "--problem", "2", "--n", "20", "--seed", "1", "--out", str(problem_path)])
    config_path = tmp_path / "solver.json"
    config_path.write_text(
        json.dumps({"m": 2, "epsilon": 1e-8, "stepsize_seed": 1, "tk_route": "direct"})
    )
    run_dir = tmp_path / "out"
    assert main(
        [
            "solve",
            "--problem-file", str(problem_path),
            "--config", str(config_path),
            "--seed", "1",
            "--out", str(run_dir),
        ]
    ) == 0
    trace = json.loads((run_dir / "trace.json").read_text())
    assert trace["tk_route"] == "direct"
    assert trace["status"] == "converged"


def test_diagnose_exit_code_on_corrupt_trace(tmp_path):
    problem_path = tmp_path / "p.json"
    main(["generate", "--problem", "1", "--n", "20", "--seed", "0", "--out", str(problem_path)])
    bad_trace = tmp_path / "bad.json"
    bad_trace.write_text('{"status": "converged"}')
    assert main(
        ["diagnose", "--trace", str(bad_trace), "--problem-file", str(problem_path)]
    ) == 1


def test_diagnose_mismatched_pair_usage_error(tmp_path):
    trace = tmp_path / "t.json"
    trace.write_text("{}")
    assert main(["diagnose", "--trace", str(trace), "--problem-file", str(trace), str(trace)]) == 2


def test_missing_file_reports_error(tmp_path):
    assert main(
        ["solve", "--problem-file", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]
    ) == 2


def test_generate_custom_spectrum(tmp_path):
    spec_path = tmp_path / "spectrum.json"
    spec_path.write_text(json.dumps({"eigenvalues": [1.0, 2.0, 8.0]}))
    out = tmp_path / "custom.json"
    assert main(
        ["generate", "--spectrum-file", str(spec_path), "--seed", "2", "--out", str(out)]
    ) == 0
    payload = json.loads(out.read_text())
    assert payload["eigenvalues"] == [1.0, 2.0, 8.0]
