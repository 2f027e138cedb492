import json
import math
import os
import subprocess
import sys
from importlib import resources

import jsonschema
import numpy as np
import pytest

from membrane_opt.cli import main
from membrane_opt.mesh import load_mesh
from membrane_opt.vtk import read_vtk_scalars

SCHEMA = json.loads(resources.files("membrane_opt").joinpath("schemas/summary.schema.json").read_text())


def read_json(path):
    return json.loads(path.read_text())


def test_mesh_square(tmp_path, capsys):
    out = tmp_path / "sq.m2d"
    assert main(["mesh", "--domain", "square", "--subdiv", "2", "--out", str(out)]) == 0
    mesh = load_mesh(out)
    assert (mesh.n_vertices, mesh.n_triangles) == (9, 8)
    assert "n_v=9 n_t=8" in capsys.readouterr().out


def test_mesh_disk_area(tmp_path, capsys):
    out = tmp_path / "disk.m2d"
    assert main(["mesh", "--domain", "disk", "--target-triangles", "20000", "--out", str(out)]) == 0
    area = float(capsys.readouterr().out.split("area=")[1])
    assert abs(area - math.pi) <= 0.005 * math.pi
    assert out.exists()


def test_mesh_treffle_lobes(tmp_path):
    assert main(["mesh", "--domain", "treffle", "--subdiv", "6", "--lobes", "0.3"]) == 0
    assert main(["mesh", "--domain", "treffle", "--subdiv", "6", "--lobes", "2.0"]) == 2


@pytest.mark.parametrize("argv", [
    ["mesh", "--domain", "hexagon"],
    ["mesh", "--subdiv", "abc"],
    ["solve", "--out", "x"],
    ["solve", "--m", "-1", "--out", "x"],
    ["solve", "--m", "0.1", "--f", "nonsense", "--out", "x"],
    [],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_solve_unreinforced(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--domain", "disk", "--subdiv", "10", "--m", "0", "--method", "p", "--out", str(out)]) == 0
    summary = read_json(out / "summary.json")
    jsonschema.validate(summary, SCHEMA)
    assert summary["unconstrained"] is True
    theta = np.loadtxt(out / "theta.csv", delimiter=",", skiprows=1)[:, 3]
    assert not theta.any()


def test_solve_both_methods_agree(tmp_path):
    out = tmp_path / "both"
    argv = ["solve", "--domain", "disk", "--subdiv", "30", "--m", "0.5", "--method", "both", "--out", str(out)]
    assert main(argv) == 0
    p, c = read_json(out / "p" / "summary.json"), read_json(out / "constrained" / "summary.json")
    for s in (p, c):
        jsonschema.validate(s, SCHEMA)
        assert s["converged"] is True
        for key in ("energy_Ef", "energy_F1", "kappa_hat", "theta_mass", "converged"):
            assert key in s
    assert p["energy_Ef"] == pytest.approx(c["energy_Ef"], rel=0.01)
    assert p["objective"] == pytest.approx(c["objective"], rel=0.01)
    cmp = read_json(out / "comparison.json")
    assert cmp["objective_rel_diff"] <= 0.01


def test_solve_outputs_layout(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--domain", "square", "--subdiv", "12", "--m", "0.1", "--vtk", "--out", str(out)]) == 0
    mesh = load_mesh(out / "mesh.m2d")
    u = np.loadtxt(out / "u.csv", delimiter=",", skiprows=1)
    theta = np.loadtxt(out / "theta.csv", delimiter=",", skiprows=1)
    assert (out / "u.csv").read_text().splitlines()[0] == "vertex,x,y,u"
    assert (out / "theta.csv").read_text().splitlines()[0] == "triangle,cx,cy,theta"
    assert u.shape == (mesh.n_vertices, 4) and theta.shape == (mesh.n_triangles, 4)
    np.testing.assert_array_equal(u[:, 1:3], mesh.vertices)
    summary = read_json(out / "summary.json")
    assert summary["theta_mass"] == pytest.approx(0.1, rel=1e-3)

    text = (out / "solution.vtk").read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 2.0"
    assert f"POINTS {mesh.n_vertices} double" in text
    assert f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}" in text
    k = text.index(f"CELL_TYPES {mesh.n_triangles}")
    assert set(text[k + 1:k + 1 + mesh.n_triangles]) == {"5"}
    fields = read_vtk_scalars(out / "solution.vtk")
    assert set(fields) == {("POINT_DATA", "u"), ("CELL_DATA", "theta"), ("CELL_DATA", "grad_norm")}
    np.testing.assert_array_equal(fields[("POINT_DATA", "u")], u[:, 3])
    np.testing.assert_array_equal(fields[("CELL_DATA", "theta")], theta[:, 3])


def test_csv_bit_identical(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["solve", "--domain", "treffle", "--subdiv", "10", "--m", "0.1", "--method", "both",
                     "--out", str(out)]) == 0
    for method in ("p", "constrained"):
        for name in ("u.csv", "theta.csv", "mesh.m2d"):
            assert (outs[0] / method / name).read_bytes() == (outs[1] / method / name).read_bytes()


def test_named_field_and_mesh_file(tmp_path):
    mesh_path = tmp_path / "e.m2d"
    assert main(["mesh", "--domain", "ellipse", "--subdiv", "10", "--out", str(mesh_path)]) == 0
    out = tmp_path / "run"
    assert main(["solve", "--mesh", str(mesh_path), "--f", "bump", "--m", "0.2", "--out", str(out)]) == 0
    summary = read_json(out / "summary.json")
    jsonschema.validate(summary, SCHEMA)
    assert summary["domain"]["kind"] == "file" and summary["f"] == "bump"
    assert main(["diagnose", "--run", str(out)]) == 0
    checks = read_json(out / "checks.json")
    assert checks["obstacle_applicable"] is False and "obstacle_violation" not in checks


def test_non_convergence_exit_code(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", "--domain", "disk", "--subdiv", "10", "--m", "0.5", "--method", "p",
                 "--max-iters", "1", "--out", str(out)])
    assert code == 3
    summary = read_json(out / "summary.json")
    assert summary["converged"] is False


def test_diagnose_disk(tmp_path):
    run = tmp_path / "run"
    assert main(["solve", "--domain", "disk", "--subdiv", "30", "--m", "0.5", "--out", str(run)]) == 0
    assert main(["diagnose", "--run", str(run)]) == 0
    checks = read_json(run / "checks.json")
    assert checks["n_plastic"] + checks["n_elastic"] == checks["n_triangles"]
    oracle = checks["oracle"]
    assert oracle["a_m"] == pytest.approx(0.6565, abs=1e-4)
    assert oracle["u_rel_l2"] <= 0.02
    assert abs(oracle["a_m_estimate"] - oracle["a_m"]) <= 0.05 * oracle["a_m"]
    assert checks["obstacle_violation"] <= checks["obstacle_tolerance"]
    assert checks["optimality_theta_mass_below"] <= 0.01 * 0.5
    assert checks["minmax_residual"] <= 1e-4
    lines = (run / "freeboundary.csv").read_text().splitlines()
    assert lines[0] == "polyline,seq,vertex,x,y" and len(lines) > 1


def test_diagnose_square_obstacle(tmp_path):
    run = tmp_path / "run"
    assert main(["solve", "--domain", "square", "--subdiv", "30", "--m", "0.1", "--out", str(run)]) == 0
    out = tmp_path / "diag"
    assert main(["diagnose", "--run", str(run), "--out", str(out)]) == 0
    checks = read_json(out / "checks.json")
    assert checks["obstacle_violation"] <= 1e-3
    assert "oracle" not in checks
    assert checks["n_plastic"] + checks["n_elastic"] == checks["n_triangles"]


def test_diagnose_missing_inputs(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["diagnose", "--run", str(tmp_path / "empty")]) == 2


def test_console_entry_point(tmp_path):
    env = dict(os.environ, MEMBRANE_OPT_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "membrane_opt", "mesh", "--domain", "square", "--subdiv", "2"],
                          capture_output=True, text=True, env=env, check=False)
    assert proc.returncode == 0 and "n_v=9" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "membrane_opt", "mesh", "--domain", "pentagon"],
                          capture_output=True, text=True, env=env, check=False)
    assert proc.returncode == 2
    probe = "import membrane_opt, os; print(os.environ['OPENBLAS_NUM_THREADS'])"
    proc = subprocess.run([sys.executable, "-c", probe], capture_output=True, text=True,
                          env={k: v for k, v in env.items() if not k.endswith("_NUM_THREADS")}, check=True)
    assert proc.stdout.strip() == "1"
