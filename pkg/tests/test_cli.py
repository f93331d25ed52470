import json

import pytest

from seglab import __version__
from seglab import problems as P
from seglab.cli import main

SMALL = ["--methods", "SEG-FFA,SEG-RR", "--eta", "0.01", "--budget", "40", "--stride", "10",
         "--instances", "2", "--seed", "3"]


def _problem_file(tmp_path):
    path = tmp_path / "prob.json"
    P.save_problem(P.gen_monotone(0, 2, 2, 4), path)
    return str(path)


def test_gen_is_byte_reproducible(tmp_path, capsys):
    args = ["gen", "--kind", "monotone", "--seed", "42", "--dx", "3", "--dy", "2", "--n", "6"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "monotone-42.json").read_bytes()
    assert a == (tmp_path / "b" / "monotone-42.json").read_bytes()
    assert P.load_problem(tmp_path / "a" / "monotone-42.json") == P.gen_monotone(42, 3, 2, 6)


def test_gen_counterexample(tmp_path):
    assert main(["gen", "--kind", "divergence", "--L", "2", "--out", str(tmp_path)]) == 0
    assert P.load_problem(tmp_path / "divergence-0.json") == P.divergence_example(2.0)


def test_gen_odd_n_is_usage_error(tmp_path, capsys):
    assert main(["gen", "--kind", "monotone", "--n", "41", "--out", str(tmp_path)]) == 2
    assert "even" in capsys.readouterr().err


def test_run_twice_byte_identical(tmp_path):
    prob = _problem_file(tmp_path)
    out = tmp_path / "run"
    assert main(["run", "--problem", prob, *SMALL, "--out", str(out / "1")]) == 0
    assert main(["run", "--problem", prob, *SMALL, "--out", str(out / "2")]) == 0
    files = sorted(p.name for p in (out / "1").glob("*.csv"))
    assert "aggregate.csv" in files and "SEG-RR-1.csv" in files
    for name in files + ["summary.json"]:
        assert (out / "1" / name).read_bytes() == (out / "2" / name).read_bytes()
    cfg = json.loads((out / "1" / "config.json").read_text())
    assert cfg["master_seed"] == 3 and cfg["instance_count"] == 2


def test_run_with_config_file_and_override(tmp_path):
    cfg = {"problem": {"generator": "monotone", "d1": 2, "d2": 2, "n": 4}, "methods": ["SEG-RR"],
           "schedule": {"kind": "constant", "eta": 0.01}, "budget_passes": 20, "checkpoint_stride": 10,
           "instance_count": 1}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path), "--budget", "30", "--out", str(tmp_path / "o")]) == 0
    resolved = json.loads((tmp_path / "o" / "config.json").read_text())
    assert resolved["budget_passes"] == 30
    rows = (tmp_path / "o" / "aggregate.csv").read_text().splitlines()
    assert rows[-1].startswith("30,SEG-RR,")


@pytest.mark.parametrize("extra", [
    ["--methods", ""],
    ["--methods", "SEG-XYZ"],
    ["--methods", "DSEG"],
    ["--poly", "0.1,2"],
])
def test_run_usage_errors(tmp_path, extra):
    prob = _problem_file(tmp_path)
    args = ["run", "--problem", prob, *SMALL, "--out", str(tmp_path / "o")]
    assert main(args + extra) == 2


def test_run_missing_pieces(tmp_path):
    assert main(["run", "--methods", "SEG-RR", "--out", str(tmp_path)]) == 2
    assert main(["run", "--problem", _problem_file(tmp_path), "--out", str(tmp_path)]) == 2
    assert main(["run", "--problem", _problem_file(tmp_path), "--methods", "SEG-RR"]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2


def test_sweep_writes_long_csv(tmp_path, capsys):
    prob = _problem_file(tmp_path)
    out = tmp_path / "sw"
    args = ["sweep", "--problem", prob, "--methods", "SEG-FFA,SEG-RR", "--budget", "20", "--stride", "10",
            "--instances", "2", "--mantissas", "1,5", "--exponents", "-3", "--out", str(out)]
    assert main(args) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "eta,pass,method,geo_mean_ratio"
    assert {line.split(",")[0] for line in lines[1:]} == {"0.001", "0.005"}
    assert "eta=0.001" in capsys.readouterr().out


def test_sweep_single_cell_matches_run(tmp_path):
    prob = _problem_file(tmp_path)
    common = ["--problem", prob, "--methods", "SEG-RR", "--budget", "20", "--stride", "10", "--instances", "2"]
    assert main(["sweep", *common, "--etas", "0.002", "--out", str(tmp_path / "s")]) == 0
    assert main(["run", *common, "--eta", "0.002", "--out", str(tmp_path / "r")]) == 0
    sweep_rows = [line.split(",", 1)[1] for line in (tmp_path / "s" / "sweep.csv").read_text().splitlines()[1:]]
    run_rows = (tmp_path / "r" / "aggregate.csv").read_text().splitlines()[1:]
    assert sweep_rows == run_rows


def test_plot(tmp_path):
    prob = _problem_file(tmp_path)
    assert main(["run", "--problem", prob, *SMALL, "--out", str(tmp_path / "r")]) == 0
    svg_path = tmp_path / "fig.svg"
    assert main(["plot", str(tmp_path / "r" / "aggregate.csv"), "--out", str(svg_path), "--title", "t"]) == 0
    svg = svg_path.read_text()
    assert svg.count('<polyline class="series"') == 2
    assert f"<!-- seglab {__version__} -->" in svg
    again = tmp_path / "fig2.svg"
    main(["plot", str(tmp_path / "r" / "aggregate.csv"), "--out", str(again), "--title", "t"])
    assert again.read_bytes() == svg_path.read_bytes()


def test_plot_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["plot", str(empty), "--out", str(tmp_path / "x.svg")]) == 2
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("pass,epoch,grad_norm_sq,grad_norm_sq_ratio,dist_sq\n0,0,1.0,1.0,\n")
    assert main(["plot", str(wrong), "--out", str(tmp_path / "x.svg")]) == 2
    assert main(["plot", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "x.svg")]) == 2


def test_verify_counterexamples(tmp_path, capsys):
    report_path = tmp_path / "report.json"
    assert main(["verify", "counterexamples", "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["suite"] == "counterexamples" and report["passed"]
    names = [c["check_name"] for c in report["checks"]]
    assert {"growth-factor/SEG-US", "growth-factor/SEG-RR", "growth-factor/SEG-FF", "egplus/ratio-two"} <= set(names)
    for c in report["checks"]:
        assert {"check_name", "expected", "observed", "tolerance", "pass"} <= set(c)
    assert "[PASS] growth-factor/SEG-FF" in capsys.readouterr().out


def test_verify_failure_exit_code(monkeypatch):
    from seglab import verify
    from seglab.analysis import CheckRecord

    monkeypatch.setitem(verify.SUITE_FUNCS, "phi", lambda: [CheckRecord("fake", 1, 2, 0, False),
                                                            CheckRecord("soft", 1, 2, 0, False, hard=False)])
    assert main(["verify", "phi"]) == 1
    monkeypatch.setitem(verify.SUITE_FUNCS, "phi", lambda: [CheckRecord("soft", 1, 2, 0, False, hard=False)])
    assert main(["verify", "phi"]) == 0
