import csv
import json
import os
import subprocess
import sys

import pytest

from curvegraph import __version__
from curvegraph.cli import run
from curvegraph.graph import add_loops, complete_graph, cycle_graph, to_edge_list, torus_graph


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, g in {"k2": complete_graph(2), "k5": complete_graph(5),
                    "c12": cycle_graph(12), "torus6": torus_graph(6),
                    "looped": add_loops(torus_graph(9))}.items():
        p = tmp_path / f"{name}.tsv"
        p.write_text(to_edge_list(g))
        out[name] = str(p)
    return out


def call(argv, capsys):
    code = run(argv)
    return code, json.loads(capsys.readouterr().out)


def test_diameter_example(capsys):
    code, doc = call(["diameter", "--n", "2", "--K", "1", "--dmu", "1"], capsys)
    assert code == 0
    b = doc["report"]["bounds"]
    assert round(b["canonical_diameter_bound"], 2) == 30.78
    assert round(b["hop_diameter_bound"], 2) == 21.77
    assert doc["schema"] == 1 and doc["version"] == __version__


def test_gaussian_parity_exit_code(files, capsys):
    code, doc = call(["gaussian", "--graph", files["k2"], "--nmax", "10"], capsys)
    assert code == 2
    assert doc["pass"] is False
    assert doc["report"]["reports"][0]["diagnostics"][0]["name"] == "parity"
    assert doc["config"]["measure"] == "degree"


def test_curvature_certification(files, capsys):
    code, doc = call(["curvature", "--graph", files["torus6"], "--measure", "degree",
                      "--dim-grid", "2:16", "--starts", "16"], capsys)
    assert code == 0
    cert = doc["report"]["certification"]
    assert cert["n0"] == 10.0
    assert len(cert["per_vertex"]) == 36


def test_curvature_per_vertex_reports(files, capsys, tmp_path):
    path = tmp_path / "k.csv"
    code, doc = call(["curvature", "--graph", files["k5"], "--measure", "degree", "--n", "16",
                      "--K", "0", "--starts", "8", "--csv", str(path), "--vertices", "0", "1",
                      "2", "3", "4"], capsys)
    assert code == 0
    reps = doc["report"]["reports"]
    assert len(reps) == 5 and all(r["K_estimate"] > 0 for r in reps)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["key", "param", "lhs", "rhs", "residual"]
    assert len(rows) == 6


def test_failed_requirement_exits_2(files, capsys):
    code, _ = call(["curvature", "--graph", files["c12"], "--n", "2", "--K", "0",
                    "--starts", "4", "--vertices", "0"], capsys)
    assert code == 2


@pytest.mark.parametrize("argv, needle", [
    (["heat", "--x", "0"], "--graph is required"),
    (["heat", "--graph", "/nonexistent.tsv", "--x", "0"], "cannot load graph"),
    (["heat", "--graph", "{c12}", "--x", "99"], "unknown vertex"),
    (["heat", "--graph", "{c12}", "--x", "0", "--tol", "-1"], "must be positive"),
    (["heat", "--graph", "{c12}", "--x", "0", "--t", "0"], "must be positive"),
    (["lsi", "--graph", "{k5}", "--n", "4", "--K", "-1"], "K must be positive"),
    (["frobnicate"], "invalid choice"),
    (["liyau", "--graph", "{c12}", "--x", "0", "--n", "2", "--b", "0.5"], "b must exceed"),
])
def test_input_errors(argv, needle, files, capsys):
    argv = [a.format(**files) for a in argv]
    code, doc = call(argv, capsys)
    assert code == 1
    assert needle in doc["error"]["message"]
    assert doc["pass"] is False


def test_malformed_graph_file(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("a\tb\t1\nb\ta\t2\n")
    code, doc = call(["metrics", "--graph", str(bad)], capsys)
    assert code == 1
    assert "duplicate" in doc["error"]["message"]


@pytest.mark.parametrize("argv", [
    ["metrics", "--graph", "{looped}", "--measure", "degree"],
    ["heat", "--graph", "{c12}", "--x", "0", "--y", "3", "--t", "0.5,2"],
    ["liyau", "--graph", "{looped}", "--measure", "degree", "--x", "0,0", "--n", "10"],
    ["variational", "--graph", "{looped}", "--measure", "degree", "--x", "0,0", "--n", "10"],
    ["harnack", "--graph", "{c12}", "--measure", "degree", "--n", "4", "--samples", "30"],
    ["expint", "--graph", "{looped}", "--measure", "degree", "--x", "0,0", "--r", "2",
     "--n", "10"],
    ["doubling", "--graph", "{looped}", "--rmax", "3"],
    ["gaussian", "--graph", "{looped}", "--nmax", "6", "--sources", "0,0", "4,4"],
    ["poincare", "--graph", "{looped}", "--x", "0,0", "--r", "1,2"],
    ["lsi", "--graph", "{k5}", "--measure", "degree", "--n", "16", "--K", "0.44",
     "--samples", "50"],
    ["decay", "--graph", "{k5}", "--measure", "degree", "--n", "16", "--K", "0.44",
     "--samples", "2"],
    ["diameter", "--graph", "{k5}", "--measure", "degree", "--n", "16", "--K", "8.8"],
])
def test_every_subcommand_passes_and_is_deterministic(argv, files, tmp_path):
    argv = [a.format(**files) for a in argv]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(argv + ["--seed", "3", "--out", str(a)]) == 0
    assert run(argv + ["--seed", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["seed"] == 3
    assert doc["pass"] is True
    if argv[0] != "diameter" or "--graph" in argv:
        assert len(doc["graph_hash"]) == 64


def test_console_script_with_thread_cap(files):
    env = dict(os.environ, CURVEGRAPH_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "curvegraph", "metrics", "--graph",
                           files["c12"]], capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["report"]["vertices"] == 12
