import json

import pytest

from qatsp import cli
from qatsp import sweep as sw


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_oracle_summary(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "oracle", "--subset", "0..6", "--qubo", "h")
    assert code == 0
    summary = json.loads(out)["summary"]
    assert summary["n_feasible"] == 5040
    assert summary["n_nonpenalized"] + summary["n_penalized"] == 5040
    data = json.loads((tmp_path / "oracle.json").read_text())
    assert data["best_infeasible"]["constraint_energy"] == pytest.approx(-12.0)
    assert (tmp_path / "manifest.json").exists()


@pytest.mark.parametrize("bad", [["-B", "0"], ["-B", "-1"], ["-A", "x"], ["--qubo", "q"]])
def test_build_qubo_bad_args_write_nothing(tmp_path, capsys, bad):
    out_dir = tmp_path / "o"
    code, _, err = run(capsys, "--out", out_dir, "build-qubo", *bad)
    assert code == 2
    assert "error" in err
    assert not out_dir.exists()


def test_unknown_command_and_flag(capsys):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "oracle", "--nope")[0] == 2
    assert run(capsys)[0] == 2


def test_bad_subset_is_usage_error(tmp_path, capsys):
    assert run(capsys, "--out", tmp_path, "oracle", "--subset", "0,0,1")[0] == 2
    assert run(capsys, "--out", tmp_path, "oracle", "--instance", tmp_path / "missing.tsp")[0] == 2


def test_runtime_error_exit_1(tmp_path, capsys):
    code, _, err = run(capsys, "--out", tmp_path, "sample", "--subset", "0..8", "--reads", 2)
    assert code == 1
    assert "CapacityError" in err


def test_build_qubo_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "build-qubo", "--subset", "0..4", "--qubo", "h",
                       "-A", 0.4, "-B", 0.1005)
    assert code == 0
    q = json.loads((tmp_path / "qubo.json").read_text())
    assert q["meta"]["qubo_type"] == "heuristic" and q["n_vars"] == 25
    assert json.loads(out)["files"] == ["qubo.json", "ising.json", "manifest.json"]


def test_env_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert run(capsys, "build-qubo", "--subset", "0..3")[0] == 0
    assert (tmp_path / "env" / "qubo.json").exists()


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_manifest_replay_byte_identical(tmp_path, capsys):
    first = tmp_path / "a"
    code, _, _ = run(capsys, "--out", first, "--jobs", 1, "sample", "--subset", "0..4", "-A", 0.65,
                     "-B", 0.25, "--reads", 30, "--sweeps", 100, "--chimera-m", "auto")
    assert code == 0
    second = tmp_path / "b"
    assert run(capsys, "--out", second, "--jobs", 3, "--manifest", first / "manifest.json")[0] == 0
    assert _files(first) == _files(second)


def test_sweep_and_plot_data(tmp_path, capsys):
    code, _, _ = run(capsys, "--out", tmp_path / "s", "--jobs", 2, "sweep", "--subset", "0..3",
                     "--A-values", "0.7", "--qubo", "r", "--reads", 5, "--sweeps", 20,
                     "--chimera-m", "auto")
    assert code == 0
    header = (tmp_path / "s" / "sweep.csv").read_text().splitlines()[0]
    assert header == ",".join(sw.CSV_HEADER)
    code, out, _ = run(capsys, "--out", tmp_path / "p", "plot-data", "--sweep",
                       tmp_path / "s" / "sweep.json", "--min-cs-real", 0.8)
    assert code == 0
    assert (tmp_path / "p" / "landscape_reference_feasible_ratio.csv").exists()
    assert run(capsys, "--out", tmp_path / "p", "plot-data")[0] == 2


def test_hybrid_and_stats(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "hybrid", "--subset", "0..7", "--max-size", 4,
                       "--reads", 10, "--sweeps", 50, "--runs", 3, "--chimera-m", "auto")
    assert code == 0
    lengths = json.loads(out)["summary"]["lengths"]
    assert len(lengths) == 3
    summary = tmp_path / "hybrid_reference_summary.json"
    code, out, _ = run(capsys, "--out", tmp_path / "st", "stats", "--r", summary, "--h",
                       "1,2,3", "--name", "x")
    assert code == 0
    assert json.loads(out)["summary"]["verdict"] in ("no-significance", "second-better")
    assert run(capsys, "--out", tmp_path / "st", "stats", "--r", "1,2", "--h", "1,2,3")[0] == 2


def test_manifest_errors(tmp_path, capsys):
    bad = tmp_path / "m.json"
    bad.write_text("{}")
    assert run(capsys, "--manifest", bad)[0] == 2
    assert run(capsys, "--manifest", bad, "oracle")[0] == 2
