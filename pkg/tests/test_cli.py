import json
from pathlib import Path

import numpy as np
import pytest

from hexmg import cli
from hexmg.material import set_jacobian_perturbation
from hexmg.studies import (ACCURACY_COLUMNS, PERFORMANCE_COLUMNS, SOLVE_COLUMNS, TARGET_COLUMNS,
                           read_csv)
from hexmg.vtk import read_vtk

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """\
extents = 2, 1, 1
counts = 2, 1, 1
order = 2
young = 2.4
poisson = 0.4
traction = 0, 0.01, 0
load_steps = 1
"""


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_solve_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    code = run("solve", "--config", write(tmp_path, SMALL + "vtk = s.vtk\n"), "--output", out)
    assert code == cli.EXIT_OK
    rows = read_csv(out / "summary.csv")
    assert list(rows[0]) == list(SOLVE_COLUMNS)
    assert float(rows[0]["psi"]) > 0 and int(rows[0]["newton_its"]) >= 1
    recs = [json.loads(line) for line in (out / "iterations.jsonl").read_text().splitlines()]
    assert recs and all(r["load"] == 1.0 for r in recs)
    assert "residual_norm" in capsys.readouterr().out
    vtk = read_vtk(out / "s.vtk")
    assert vtk["displacement"].shape == (int(rows[0]["dofs"]) // 3, 3)
    assert np.abs(vtk["displacement"]).max() > 0


def test_zero_traction_gives_zero_energy(tmp_path):
    cfg = SMALL.replace("traction = 0, 0.01, 0", "traction = 0, 0, 0") + "vtk = none\n"
    out = tmp_path / "out"
    assert run("solve", "--config", write(tmp_path, cfg), "--output", out) == 0
    row = read_csv(out / "summary.csv")[0]
    assert float(row["psi"]) == 0.0 and row["newton_its"] == "0"
    assert not (out / "solution.vtk").exists()


def test_bending_config_solves(tmp_path):
    out = tmp_path / "bend"
    assert run("solve", "--config", CONFIGS / "bar_bending.cfg", "--output", out) == 0
    row = read_csv(out / "summary.csv")[0]
    assert row["case_id"] == "bending" and float(row["psi"]) > 0
    assert (out / "bending.vtk").exists()


@pytest.mark.parametrize("text", ["colour = red\n", "order = two\n", "order\n",
                                  "poisson = 0.5\n", "fixed_faces = \n"])
def test_config_errors_exit_2(tmp_path, capsys, text):
    assert run("solve", "--config", write(tmp_path, SMALL + text), "--output", tmp_path) == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_config_exit_3(tmp_path, capsys):
    assert run("solve", "--config", tmp_path / "missing.cfg", "--output", tmp_path) == 3
    assert "I/O error" in capsys.readouterr().err


def test_unwritable_output_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("solve", "--config", write(tmp_path, SMALL), "--output", blocker / "sub") == 3


def test_solver_failure_exit_1(tmp_path, capsys):
    cfg = SMALL.replace("traction = 0, 0.01, 0", "traction = 0, 5, 0") + "newton_max_it = 1\n"
    assert run("solve", "--config", write(tmp_path, cfg), "--output", tmp_path / "o") == 1
    assert "phase" in capsys.readouterr().err


ACCURACY = SMALL.replace("order = 2\n", "") + """\
cases = a:1:1, b:1:2, c:2:1
reference = ref:3:2
target_error = 0.05
"""


def test_study_accuracy(tmp_path, capsys):
    out = tmp_path / "acc"
    assert run("study-accuracy", "--config", write(tmp_path, ACCURACY), "--output", out) == 0
    rows = read_csv(out / "accuracy.csv")
    assert list(rows[0]) == list(ACCURACY_COLUMNS)
    assert [r["case_id"] for r in rows] == ["a", "b", "c"]
    errs = {r["case_id"]: float(r["rel_error"]) for r in rows}
    assert errs["a"] > errs["b"] and errs["a"] > errs["c"]
    targets = read_csv(out / "accuracy_target.csv")
    assert list(targets[0]) == list(TARGET_COLUMNS)
    assert "reference ref" in capsys.readouterr().out


def test_duplicate_case_ids_rejected(tmp_path):
    text = ACCURACY.replace("c:2:1", "a:2:1")
    assert run("study-accuracy", "--config", write(tmp_path, text), "--output", tmp_path) == 2
    text = ACCURACY.replace("ref:3:2", "a:3:2")
    assert run("study-accuracy", "--config", write(tmp_path, text), "--output", tmp_path) == 2


PERFORMANCE = """\
extents = 1, 1, 1
counts = 1, 1, 1
orders = 1, 2, 3
dof_ladder = 6
repeats = 2
warmup = 1
"""


def test_study_performance(tmp_path):
    out = tmp_path / "perf"
    assert run("study-performance", "--config", write(tmp_path, PERFORMANCE), "--output", out) == 0
    rows = read_csv(out / "performance.csv")
    assert list(rows[0]) == list(PERFORMANCE_COLUMNS)
    assert len(rows) == 6 and all(r["status"] == "ok" for r in rows)
    assert len({r["dofs"] for r in rows}) == 1  # same lattice for every order
    mf = [float(r["bytes_per_dof"]) for r in rows if r["representation"] == "matrix-free"]
    nnz = [float(r["nnz_per_row"]) for r in rows if r["representation"] == "assembled"]
    assert mf[0] > mf[1] > mf[2]
    assert nnz[0] < nnz[1] < nnz[2]


def test_performance_memory_cap(tmp_path):
    text = PERFORMANCE + "max_assembled_bytes = 1000\n"
    out = tmp_path / "perf"
    assert run("study-performance", "--config", write(tmp_path, text), "--output", out) == 0
    rows = read_csv(out / "performance.csv")
    assembled = [r for r in rows if r["representation"] == "assembled"]
    assert all(r["status"] == "failed:out-of-memory" for r in assembled)
    assert all(r["status"] == "ok" for r in rows if r["representation"] == "matrix-free")


def test_performance_ladder_must_divide(tmp_path):
    text = PERFORMANCE.replace("dof_ladder = 6", "dof_ladder = 4")
    assert run("study-performance", "--config", write(tmp_path, text), "--output", tmp_path) == 2


def test_verify_passes(capsys):
    assert run("verify") == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "Galerkin" in out


def test_verify_detects_perturbed_jacobian(capsys):
    assert run("verify", "--perturb-jacobian", "1e-3") == 1
    assert "FAIL" in capsys.readouterr().out
    # hook is reset afterwards
    assert run("verify") == 0


def test_threads_and_deterministic_flags(tmp_path):
    outs = []
    for i, extra in enumerate([["--threads", 1], ["--threads", 2, "--deterministic"]]):
        out = tmp_path / f"o{i}"
        assert run("solve", "--config", write(tmp_path, SMALL + "vtk = none\n"), "--output", out,
                   *extra) == 0
        outs.append(read_csv(out / "summary.csv")[0]["psi"])
    assert outs[0] == outs[1]


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "hexmg", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "study-accuracy" in res.stdout
