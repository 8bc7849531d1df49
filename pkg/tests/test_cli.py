"""Command-line driver: exit codes, manifests, artifact layout, and the
documented invocation examples."""

import json
import math
import os
import shutil
import subprocess
import sys

import pytest

from hgfsym.cli import UsageError, execute, fig1_dataset, report_render
from hgfsym.symmetry import Report


def run(argv, out_dir):
    """execute() with the artifact directory injected; argparse-level
    failures surface as exit status 2 like in a real shell."""
    try:
        return execute(list(argv) + ["--out-dir", str(out_dir)])
    except SystemExit as e:
        return 2 if e.code else 0


def read_manifest(out_dir, name):
    return json.loads((out_dir / name).read_text())


def test_verify_case_documented_invocation(tmp_path, capsys):
    code = run(["verify-case", "--case", "2", "--params", "d1=1,d2=2,d3=0.5",
                "--samples", "200", "--tol", "1e-9"], tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "verify_case2.json")
    assert man["passed"] is True
    assert len(man["checks"]) == 2, "case 2 carries two operators"
    for chk in man["checks"]:
        assert chk["pass"] is True
        assert chk["max_residual"] <= 1e-9
        assert chk["samples"] == 400, "confirmation pass doubles the samples"
    out = capsys.readouterr().out
    assert out.count("PASS") == 2 and "FAIL" not in out


def test_verify_case_restriction_violation_is_usage_error(tmp_path, capsys):
    code = run(["verify-case", "--case", "2",
                "--params", "d1=1,d2=1,d3=0.5"], tmp_path)
    assert code == 2
    err = capsys.readouterr().err
    assert "d1 != d2" in err, f"stderr must name the violated restriction: {err}"


def test_verify_case_all_catalog(tmp_path):
    code = run(["verify-case", "--all", "--samples", "60"], tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "verify_all.json")
    assert len(man["checks"]) == 18, "13 cases carry 18 operators in total"
    assert man["options"]["cases"] == list(range(1, 14))
    assert not list(tmp_path.glob("*.tmp")), "temp files must be renamed away"


def test_verify_solution_documented_invocation(tmp_path):
    code = run(["verify-solution", "--id", "4-11",
                "--params", "k=0.25,alpha=0,beta=0.6,d1=1,d2=2,d3=0.5"],
               tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "verify_sol_4_11.json")
    labels = [c["case"] for c in man["checks"]]
    assert len(labels) == 3, f"expected residual, identity and asymptotics: {labels}"
    assert any("u + v" in l for l in labels)
    assert any("asymptotics" in l for l in labels)
    assert man["passed"] is True


def test_verify_solution_rejects_unknown_id(tmp_path, capsys):
    assert run(["verify-solution", "--id", "4-99"], tmp_path) == 2
    assert "unknown solution" in capsys.readouterr().err
    assert run(["verify-solution", "--id", "4-11", "--grid", "20y20"],
               tmp_path) == 2


def test_verify_operator_inline_eta(tmp_path):
    code = run(["verify-operator", "--case", "2",
                "--params", "d1=1,d2=2,d3=0.5",
                "--eta1=w", "--eta2=-w", "--eta3=-w"], tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "verify_operator.json")
    assert man["criteria_agree"] is True
    assert len(man["checks"]) == 2, "invariance and determining-equation checks"


def test_verify_operator_explicit_definition(tmp_path):
    cfg = tmp_path / "model.json"
    cfg.write_text(json.dumps({
        "d": ["1", "2", "1/2"],
        "C": ["u*(1-u-v)", "3*v*(1-u-v)+u*w+v*w", "-(1/2)*u*w-(1/2)*v*w"],
        "xi": "0",
        "eta": ["w", "-w", "-w"],
    }))
    code = run(["verify-operator", "--config", str(cfg)], tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "verify_operator.json")
    assert man["criteria_agree"].startswith("skipped"), \
        "explicit systems have no coefficient set to test against"
    assert len(man["checks"]) == 1


def test_verify_case_config_toml(tmp_path):
    cfg = tmp_path / "case6.toml"
    cfg.write_text('case = 6\nP = "exp(x+2*t)"\n\n[params]\na2 = 0\n')
    code = run(["verify-case", "--config", str(cfg)], tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "verify_case6.json")
    assert man["passed"] is True


def test_seed_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("RDSYM_SEED", "12345")
    code = run(["verify-case", "--case", "2", "--samples", "40"], tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "verify_case2.json")
    assert man["options"]["seed"] == 12345
    assert man["checks"][0]["seed"] == [12345, 12346], \
        "confirmation pass reseeds with seed + 1"
    monkeypatch.setenv("RDSYM_SEED", "ten")
    assert run(["verify-case", "--case", "2"], tmp_path) == 2


def test_reduce_scalar_profile(tmp_path):
    code = run(["reduce", "--system", "4-13", "--params", "d1=1",
                "--init=-0.5,0", "--span", "0:1", "--h", "0.01"], tmp_path)
    assert code == 0
    csv_lines = (tmp_path / "reduce_eq_4_13.csv").read_text().splitlines()
    assert csv_lines[0] == "x,phi1,phi1'"
    assert len(csv_lines) == 102
    man = read_manifest(tmp_path, "reduce_eq_4_13.json")
    assert man["n_steps"] == 100 and man["passed"] is True


def test_reduce_with_lift(tmp_path, capsys):
    code = run(["reduce", "--system", "4-6", "--params", "d1=1,d2=2,d3=0.5",
                "--init", "0.6,0,0.4,0,0,0.25", "--span", "0:pi",
                "--lift", "Q1"], tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "reduce_sys_4_6.json")
    assert man["passed"] is True
    assert man["checks"][0]["max_residual"] <= 1e-9
    assert "PASS" in capsys.readouterr().out


def test_reduce_blow_up_exits_one(tmp_path, capsys):
    code = run(["reduce", "--system", "4-13", "--params", "d1=1",
                "--init", "1.5,0", "--span", "0:10"], tmp_path)
    assert code == 1
    man = read_manifest(tmp_path, "reduce_eq_4_13.json")
    assert man["passed"] is False and "last_x" in man
    assert "blow-up" in capsys.readouterr().err


def test_reduce_usage_errors(tmp_path):
    assert run(["reduce", "--system", "4-13", "--params", "d1=1",
                "--init", "1,0,2,0", "--span", "0:1"], tmp_path) == 2
    assert run(["reduce", "--system", "4-13", "--params", "d1=1",
                "--init", "1,0", "--span", "0:1", "--lift", "Q1"],
               tmp_path) == 2


def test_simulate_from_solution(tmp_path, capsys):
    code = run(["simulate", "--solution", "4-11", "--n-cells", "16",
                "--t-end", "0.1"], tmp_path)
    assert code == 0
    out = capsys.readouterr().out
    assert "sup error" in out, "runs seeded by an exact solution print errors"
    csv_lines = (tmp_path / "simulate.csv").read_text().splitlines()
    assert csv_lines[0] == "t,x,u,v,w"
    assert len(csv_lines) == 2 * 17 + 1
    man = read_manifest(tmp_path, "simulate.json")
    assert man["n_cells"] == 16 and man["boundary"] == "dirichlet-from-exact"


def test_simulate_explicit_initial_data(tmp_path):
    code = run(["simulate", "--case", "2", "--params", "d1=1,d2=2,d3=0.5",
                "--u0", "3/5", "--v0", "2/5", "--w0", "0", "--x", "0:pi",
                "--n-cells", "16", "--t-end", "0.05"], tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "simulate.json")
    assert man["boundary"] == "no-flux", "no exact source defaults to no-flux"
    assert man["max_abs"] == 0.6, "the equilibrium never moves"


def test_simulate_blow_up_exits_one(tmp_path, capsys):
    code = run(["simulate", "--case", "2", "--params", "d1=1,d2=2,d3=0.5",
                "--u0", "1000000", "--v0", "0", "--w0", "0", "--x", "0:pi",
                "--n-cells", "16", "--t-end", "1"], tmp_path)
    assert code == 1
    man = read_manifest(tmp_path, "simulate.json")
    assert man["passed"] is False and "last_t" in man
    assert "blow-up" in capsys.readouterr().err


def test_simulate_requires_initial_source(tmp_path):
    assert run(["simulate", "--x", "0:pi"], tmp_path) == 2
    assert run(["simulate", "--case", "2", "--params", "d1=1,d2=2,d3=0.5",
                "--x", "0:pi"], tmp_path) == 2


def test_converge_reports_second_order(tmp_path, capsys):
    code = run(["converge", "--solution", "4-11", "--n-cells", "16",
                "--t-end", "0.5", "--levels", "3", "--expect", "1.7:2.3"],
               tmp_path)
    assert code == 0
    man = read_manifest(tmp_path, "converge_sol_4_11.json")
    assert man["n_values"] == [16, 32, 64]
    assert all(1.7 <= o <= 2.3 for o in man["orders"])
    out = capsys.readouterr().out
    assert "observed orders" in out and "yes" in out


def test_fig1_dataset_frozen_values(tmp_path):
    paths = fig1_dataset("right", tmp_path)
    lines = open(paths["csv"]).read().splitlines()
    assert lines[0] == "t,x,u,v,w"
    assert len(lines) == 101 * 101 + 1
    row = lines[1 + 50].split(",")
    assert float(row[0]) == 0.0
    assert abs(float(row[1]) - math.pi / 2) <= 1e-14
    assert (float(row[2]), float(row[3]), float(row[4])) == (0.35, 0.65, 0.25)
    t20 = open(paths["slice"]).read().splitlines()
    w_late = max(abs(float(r.split(",")[4])) for r in t20[1:])
    assert w_late <= 1e-7, f"settled |w| at t=20 is {w_late:.3e}"
    man = json.loads(open(paths["manifest"]).read())
    assert man["passed"] is True and len(man["artifacts"]) == 3
    script = open(paths["script"]).read()
    assert "splot" in script and script.count("using") == 3


def test_fig1_left_panel_and_rerun_identity(tmp_path):
    paths = fig1_dataset("left", tmp_path)
    first = open(paths["csv"], "rb").read()
    row0 = open(paths["csv"]).read().splitlines()[1].split(",")
    assert (float(row0[2]), float(row0[3]), float(row0[4])) == (0.6, 0.4, 0.0)
    again = fig1_dataset("left", tmp_path)
    assert open(again["csv"], "rb").read() == first, "rerun must be byte-identical"
    with pytest.raises(UsageError):
        fig1_dataset("middle", tmp_path)


def test_fig1_verb(tmp_path, capsys):
    assert run(["fig1", "--panel", "right"], tmp_path) == 0
    out = capsys.readouterr().out
    assert "fig1_right.csv" in out


def test_list_cases(capsys):
    assert execute(["list-cases"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 13
    assert all(l.startswith("case ") for l in lines)
    assert execute(["list-cases", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert [d["case"] for d in data] == list(range(1, 14))


def test_report_render_contract():
    rep = Report(label="demo", passed=True, max_residual=1e-16,
                 per_equation={"eq1": 1e-16}, samples=10, seed=7, tol=1e-9,
                 params={"d1": 1})
    text = report_render([rep])
    head, line = text.splitlines()
    assert head.split() == ["check", "params", "samples", "max_residual",
                            "status"]
    assert "PASS" in line and "demo" in line
    with pytest.raises(UsageError):
        report_render([])


def test_installed_entry_point():
    exe = shutil.which("hgfsym")
    cmd = [exe, "list-cases"] if exe else [sys.executable, "-m",
                                           "hgfsym.cli", "list-cases"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(proc.stdout.strip().splitlines()) == 13
