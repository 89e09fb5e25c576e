import json
import math
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

import oracles
from maxwellconst import SCHEMA_VERSION
from maxwellconst import cli
from maxwellconst import report as R
from maxwellconst.config import ConfigError, load
from maxwellconst.experiments import THREADS_ENV

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, text, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cfg(path, capsys):
    code = cli.main(["run", path])
    out = capsys.readouterr()
    return code, out.out, out.err


def grid_cfg(tmp_path, extra="", report="rep.json"):
    return write_cfg(tmp_path, f"""
kind: constants
n_dim: 2
levels: [8, 16]
q: [1]
seed: 0
output: {{report: {tmp_path / report}}}
{extra}
""")


# -- run ------------------------------------------------------------------------------------

def test_constants_run_end_to_end(tmp_path, capsys):
    code, out, _ = run_cfg(grid_cfg(tmp_path), capsys)
    assert code == cli.EXIT_OK and "checks passed" in out
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["schema_version"] == SCHEMA_VERSION and rep["passed"] and rep["seed"] == 0
    rows = {(r["m"], r["q"]): r for r in rep["rows"]}
    assert rows[(16, 1)]["C_t"] == pytest.approx(oracles.maxwell_tangential_closed_form(2, 1, 16), rel=1e-9)
    assert rows[(16, 1)]["c_p"] == pytest.approx(1 / math.sqrt(oracles.mu_2(2, 16)), rel=1e-9)
    assert rows[(16, 1)]["c_f"] == pytest.approx(1 / math.sqrt(oracles.lambda_1(2, 16)), rel=1e-9)
    for v in rep["verdicts"]:
        assert {"lhs", "rhs", "tolerance", "rule", "relation", "passed", "slack"} <= set(v)


def test_report_byte_identical(tmp_path, capsys):
    a = grid_cfg(tmp_path, report="a.json")
    assert run_cfg(a, capsys)[0] == 0
    first = (tmp_path / "a.json").read_bytes()
    assert run_cfg(a, capsys)[0] == 0
    assert (tmp_path / "a.json").read_bytes() == first


def test_thread_count_does_not_change_report(tmp_path, capsys, monkeypatch):
    path = write_cfg(tmp_path, f"""
kind: verify-chain
n_dim: 2
levels: [8, 16]
q: [1, 2]
eps: [{{kind: identity}}, {{kind: scalar, value: 4}}, {{kind: field, expr: "1 + x1"}}]
output: {{report: {tmp_path / 'chain.json'}}}
""")
    blobs = []
    for n in ("1", "4"):
        monkeypatch.setenv(THREADS_ENV, n)
        assert run_cfg(path, capsys)[0] == 0
        blobs.append((tmp_path / "chain.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_bad_degree_exits_2_naming_key(tmp_path, capsys):
    cfg = tmp_path / "bad_degree.yaml"
    shutil.copy(CONFIGS / "bad_degree.yaml", cfg)
    code, _, err = run_cfg(str(cfg), capsys)
    assert code == cli.EXIT_CONFIG and "'q/0'" in err


@pytest.mark.parametrize("body,key", [
    ("kind: constants\nn_dim: 2\nlevels: [8]\nq: [1]\ncolour: red\n", "colour"),
    ("kind: constants\nn_dim: 2\nlevels: [8]\n", "q"),
    ("kind: constants\nn_dim: 2\nlevels: [8]\nq: [1]\neps: [{kind: scalar, value: -1}]\n", "eps/0"),
    ("kind: wibble\n", "kind"),
])
def test_invalid_configs_exit_2(tmp_path, capsys, body, key):
    code, _, err = run_cfg(write_cfg(tmp_path, body), capsys)
    assert code == cli.EXIT_CONFIG and key in err


def test_config_validation_before_compute(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load(write_cfg(tmp_path, "kind: constants\nn_dim: 2\nlevels: [8, 0]\nq: [1]\n"))
    assert "levels/1" in str(exc.value)


def test_solver_failure_exits_3_with_dump(tmp_path, capsys):
    path = grid_cfg(tmp_path, "solver: {method: lobpcg}\ntolerances: {solver: 1.0e-300}")
    code, _, err = run_cfg(path, capsys)
    assert code == cli.EXIT_SOLVER
    assert '"residuals"' in err and '"iterations"' in err


def test_failed_check_exits_1_naming_inequality(tmp_path, capsys, monkeypatch):
    from maxwellconst import experiments
    from maxwellconst.checks import check_le

    def fake(cfg):
        return {}, [check_le("main-theorem-chain", 2.0, 1.0, 0.0, label="forced")], []

    monkeypatch.setitem(experiments.DRIVERS, "constants", fake)
    monkeypatch.setitem(cli.DRIVERS, "constants", fake)
    code, _, err = run_cfg(grid_cfg(tmp_path), capsys)
    assert code == cli.EXIT_CHECK and "main-theorem-chain" in err


def test_abstract_suite_hundred_seeds(tmp_path, capsys):
    path = write_cfg(tmp_path, f"kind: abstract-suite\nseeds: {{start: 0, count: 100}}\noutput: {{report: {tmp_path / 'abs.json'}}}\n")
    assert run_cfg(path, capsys)[0] == 0
    rep = json.loads((tmp_path / "abs.json").read_text())
    assert rep["passed"] and len(rep["results"]["records"]) == 100
    assert all(r["passed"] for r in rep["results"]["records"])


@pytest.mark.parametrize("name", ["transform_scaling", "transform_lshape", "transform_sinusoidal", "gaffney_3d", "chain_3d"])
def test_shipped_configs_pass(tmp_path, capsys, name):
    text = (CONFIGS / f"{name}.yaml").read_text()
    text = text.replace("reports/", f"{tmp_path}/")
    code, out, err = run_cfg(write_cfg(tmp_path, text, f"{name}.yaml"), capsys)
    assert code == 0, err


# -- summarize ------------------------------------------------------------------------------

def test_summarize_single_round_trip(tmp_path, capsys):
    run_cfg(grid_cfg(tmp_path), capsys)
    out = tmp_path / "table.tsv"
    assert cli.main(["summarize", str(tmp_path / "rep.json"), "-o", str(out)]) == 0
    rows = R.parse_table(out.read_text())
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert len(rows) == len(rep["rows"])
    assert list(rows[0]) == list(R.SUMMARY_COLUMNS)
    for got, ref in zip(rows, sorted(rep["rows"], key=lambda r: (r["N"], r["q"], r["m"], r["eps"]))):
        assert float(got["C_t"]) == ref["C_t"] and int(got["m"]) == ref["m"]
    assert {"solver_tol", "max_formula_rtol", "duality_rtol"} <= set(rows[0])


def test_summarize_merges_and_sorts(tmp_path, capsys):
    a = write_cfg(tmp_path, f"kind: constants\nn_dim: 2\nlevels: [16]\nq: [1, 0]\noutput: {{report: {tmp_path / 'a.json'}}}\n", "a.yaml")
    b = write_cfg(tmp_path, f"kind: constants\nn_dim: 2\nlevels: [8]\nq: [1]\ntolerances: {{solver: 1.0e-10}}\noutput: {{report: {tmp_path / 'b.json'}}}\n", "b.yaml")
    run_cfg(a, capsys)
    run_cfg(b, capsys)
    assert cli.main(["summarize", str(tmp_path / "a.json"), str(tmp_path / "b.json")]) == 0
    rows = R.parse_table(capsys.readouterr().out)
    keys = [(int(r["N"]), int(r["q"]), int(r["m"])) for r in rows]
    assert keys == sorted(keys) and len(rows) == 3
    tols = {r["report"]: float(r["solver_tol"]) for r in rows}
    assert tols["b.json"] == 1e-10 and tols["a.json"] == 1e-9


def test_summarize_schema_mismatch(tmp_path, capsys):
    run_cfg(grid_cfg(tmp_path), capsys)
    rep = json.loads((tmp_path / "rep.json").read_text())
    rep["schema_version"] = "0.9"
    (tmp_path / "old.json").write_text(json.dumps(rep))
    assert cli.main(["summarize", str(tmp_path / "old.json")]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "'0.9'" in err and repr(SCHEMA_VERSION) in err


# -- serialization --------------------------------------------------------------------------

def test_dumps_deterministic_numbers():
    text = R.dumps({"b": 0.1, "a": [math.inf, -math.inf, 3], "c": {"z": True, "y": None}, "n": 2.0})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert '"inf"' in text and '"-inf"' in text and "0.10000000000000001" in text and "2.0" in text
    back = json.loads(text)
    assert back["b"] == 0.1


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("maxwellconst")
    cmd = [exe] if exe else [sys.executable, "-m", "maxwellconst"]
    r = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert r.returncode == 0 and THREADS_ENV in r.stdout
