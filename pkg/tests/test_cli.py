import json
import math

import pytest

from nccscatter.cli import main
from nccscatter.services import artifacts

from conftest import write_pes

FIXED_PATH = """[masses]
mA_amu = 7.0
mB_amu = 19.0
mC_amu = 1.0

[path]
a = 1.0
q_eq_minus_A = 0.917
q_eq_plus_A = 1.564

[integrator]
u_start = -8.0
u_nonreact = -8.0
u_react = 8.0

[quantum]
u_min = -4.0
u_max = 4.0
u_steps = 9
v_steps = 20
"""

H3 = """[masses]
mA_amu = 1.0
mB_amu = 1.0
mC_amu = 1.0

[pes]
file = h3.ini

[sweep]
E_min_eV = -4.2
E_max_eV = -4.1
nE = 2
nPhi = 2
"""


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def manifest(out):
    return json.loads((out / "manifest.json").read_text(encoding="utf-8"))


def test_no_subcommand_prints_help(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().out


def test_path_table(tmp_path, capsys):
    cfg = write_config(tmp_path, FIXED_PATH)
    out = tmp_path / "out"
    assert run("path-table", "--config", cfg, "--out", out, "--plot-script") == 0
    rows = artifacts.read_csv(out / "path_table.csv", required=["u_bohr", "phi_rad", "K_invbohr", "ds_du"])
    assert len(rows) == 9
    assert float(rows[0]["u_bohr"]) == -4.0 and float(rows[-1]["u_bohr"]) == 4.0
    assert (out / "path_table.gp").exists()
    data = manifest(out)
    assert data["command"] == "path-table"
    assert data["derived"] == []
    assert data["config"]["path"]["a"] == 1.0
    assert data["audit"]["ds_du_positive"] is True
    assert "Wrote:" in capsys.readouterr().out


def test_flags_override_config(tmp_path):
    cfg = write_config(tmp_path, FIXED_PATH)
    out = tmp_path / "out"
    assert run("path-table", "--config", cfg, "--out", out, "--u-steps", "5", "--u-min", "-2") == 0
    rows = artifacts.read_csv(out / "path_table.csv")
    assert [float(r["u_bohr"]) for r in rows] == [-2.0, -0.5, 1.0, 2.5, 4.0]
    assert manifest(out)["config"]["quantum"]["u_steps"] == 5


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, FIXED_PATH)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("pes-slice", "--config", cfg, "--out", a) == 0
    assert run("pes-slice", "--config", cfg, "--out", b, "--threads", "3") == 0
    assert (a / "pes_slice.csv").read_bytes() == (b / "pes_slice.csv").read_bytes()
    assert len(artifacts.read_csv(a / "pes_slice.csv")) == 9 * 20


def test_config_error_exit_code_and_record(tmp_path, capsys):
    cfg = write_config(tmp_path, FIXED_PATH + "chanels = 3\n")
    out = tmp_path / "out"
    assert run("path-table", "--config", cfg, "--out", out) == 2
    assert "unknown key quantum.chanels" in capsys.readouterr().err
    record = json.loads((out / "error.json").read_text(encoding="utf-8"))
    assert record["command"] == "path-table"
    assert record["line"] == 21
    assert record["exit_code"] == 2
    assert not (out / "manifest.json").exists()


def test_permissive_mode_runs(tmp_path):
    cfg = write_config(tmp_path, FIXED_PATH + "chanels = 3\n")
    assert run("path-table", "--config", cfg, "--out", tmp_path / "out", "--permissive") == 0


def test_domain_error_exit_code(tmp_path):
    cfg = write_config(tmp_path, FIXED_PATH)
    out = tmp_path / "out"
    assert run("path-table", "--config", cfg, "--out", out, "--u-min", "5") == 4
    assert json.loads((out / "error.json").read_text(encoding="utf-8"))["type"] == "DomainError"


def test_missing_energy_is_a_config_error(tmp_path):
    cfg = write_config(tmp_path, FIXED_PATH)
    assert run("trajectory", "--config", cfg, "--out", tmp_path / "out") == 2


def test_average_from_artifacts(tmp_path):
    cfg = write_config(tmp_path, FIXED_PATH)
    map_path = artifacts.write_csv(
        tmp_path / "map.csv",
        ["E_eV", "phi_rad", "outcome"],
        [(-5.5, k * math.pi / 2, 1 if k < 2 else 0) for k in range(4)],
    )
    columns = ["E_eV", "phi_rad", "mode", "resonant", "arr_in", "n_in", "arr_out", "n_out", "S_re", "S_im", "prob"]
    scatter_path = artifacts.write_csv(
        tmp_path / "scatter.csv",
        columns,
        [
            (-5.5, None, "static", False, "reactant", 0, "reactant", 0, 0.0, 0.0, 0.5),
            (-5.5, None, "static", False, "reactant", 0, "product", 0, 0.0, 0.0, 0.3),
            (-5.5, None, "static", False, "reactant", 0, "product", 1, 0.0, 0.0, 0.2),
            (-5.4, None, "static", False, "reactant", 0, "product", 0, 0.0, 0.0, 0.9),
        ],
    )
    out = tmp_path / "out"
    code = run(
        "average", "--config", cfg, "--out", out, "--map", map_path, "--scatter", scatter_path,
        "--energy-ev", "-5.5", "--rectangles", "2",
    )
    assert code == 0
    rows = artifacts.read_csv(out / "average.csv", required=["arrangement", "m", "W"])
    W = {(r["arrangement"], int(r["m"])): float(r["W"]) for r in rows}
    assert W == {("product", 0): pytest.approx(0.3), ("product", 1): pytest.approx(0.2), ("reactant", 0): pytest.approx(0.5)}
    data = manifest(out)
    assert data["summary"]["sigma_total"] == pytest.approx(1.0)
    assert data["audit"]["flux_sum"] == pytest.approx(1.0)
    sigmas = [float(r["sigma"]) for r in artifacts.read_csv(out / "measure.csv")]
    assert sigmas == [1.0, 0.0]


def test_average_without_reactive_measure(tmp_path):
    cfg = write_config(tmp_path, FIXED_PATH)
    map_path = artifacts.write_csv(tmp_path / "map.csv", ["E_eV", "phi_rad", "outcome"], [(-5.5, 0.0, 0), (-5.5, math.pi, 0)])
    scatter_path = artifacts.write_csv(tmp_path / "scatter.csv", ["E_eV", "phi_rad", "arr_in", "n_in", "arr_out", "n_out", "prob"], [])
    out = tmp_path / "out"
    code = run("average", "--config", cfg, "--out", out, "--map", map_path, "--scatter", scatter_path, "--energy-ev", "-5.5", "--rectangles", "2")
    assert code == 4
    assert json.loads((out / "error.json").read_text(encoding="utf-8"))["type"] == "NoReactiveMeasureError"


def test_find_saddle_on_symmetric_surface(tmp_path):
    write_pes(tmp_path / "h3.ini")
    cfg = write_config(tmp_path, H3)
    out = tmp_path / "out"
    assert run("find-saddle", "--config", cfg, "--out", out) == 0
    row = artifacts.read_csv(out / "saddle.csv")[0]
    assert float(row["r_AB_A"]) == pytest.approx(float(row["r_BC_A"]), abs=1e-5)
    assert float(row["hessian_min"]) < 0.0 < float(row["hessian_max"])
    assert manifest(out)["summary"]["path_a"] > 0.0


def test_chaos_map_grid_and_thread_independence(tmp_path):
    write_pes(tmp_path / "h3.ini")
    cfg = write_config(tmp_path, H3)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("chaos-map", "--config", cfg, "--out", a) == 0
    assert run("chaos-map", "--config", cfg, "--out", b, "--threads", "2") == 0
    rows = artifacts.read_csv(a / "chaos_map.csv", required=["E_eV", "phi_rad", "outcome"])
    assert len(rows) == 4
    assert {r["outcome"] for r in rows} <= {"0", "1", "2"}
    assert [float(r["phi_rad"]) for r in rows[:2]] == [0.0, math.pi]
    assert (a / "chaos_map.csv").read_bytes() == (b / "chaos_map.csv").read_bytes()
    derived = manifest(a)["derived"]
    assert "path.a" in derived and "integrator.u_start" in derived


def test_average_assigns_tube_phases_to_their_rectangles(tmp_path):
    cfg = write_config(tmp_path, FIXED_PATH)
    map_path = artifacts.write_csv(
        tmp_path / "map.csv",
        ["E_eV", "phi_rad", "outcome"],
        [(-5.5, k * math.pi / 2, 0 if k == 2 else 1) for k in range(4)],
    )
    columns = ["E_eV", "phi_rad", "mode", "resonant", "arr_in", "n_in", "arr_out", "n_out", "S_re", "S_im", "prob"]
    tubes = {0.1: (0.0, 1.0), math.pi / 4: (0.4, 0.6), 4.2: (0.9, 0.1), -0.3: (0.5, 0.5)}
    scatter_rows = []
    for phi, (react, refl) in tubes.items():
        scatter_rows.append((-5.5, phi, "tube", False, "reactant", 0, "product", 0, 0.0, 0.0, react))
        scatter_rows.append((-5.5, phi, "tube", False, "reactant", 0, "reactant", 0, 0.0, 0.0, refl))
    scatter_path = artifacts.write_csv(tmp_path / "scatter.csv", columns, scatter_rows)
    out = tmp_path / "out"
    code = run(
        "average", "--config", cfg, "--out", out, "--map", map_path, "--scatter", scatter_path,
        "--energy-ev", "-5.5", "--rectangles", "4",
    )
    assert code == 0
    rows = artifacts.read_csv(out / "average.csv", required=["arrangement", "m", "W"])
    W = {(r["arrangement"], int(r["m"])): float(r["W"]) for r in rows}
    # [0, pi/2) averages 0.1 and pi/4; [pi/2, pi) borrows pi/4; [3pi/2, 2pi) holds -0.3
    assert W == {("product", 0): pytest.approx(1.1 / 3), ("reactant", 0): pytest.approx(1.9 / 3)}
    assert manifest(out)["audit"]["flux_sum"] == pytest.approx(1.0)
    sigmas = [float(r["sigma"]) for r in artifacts.read_csv(out / "measure.csv")]
    assert sigmas == [1.0, 1.0, 0.0, 1.0]


def test_default_tube_phases_are_cell_centres(tmp_path):
    from nccscatter.lib.config import load_config
    from nccscatter.services.runner import Runner

    cfg = write_config(tmp_path, FIXED_PATH + "\n[scatter]\nphi_rad = 0.1\nnPhi = 4\n")
    runner = Runner(load_config(cfg), tmp_path / "out")
    expected = [0.1 + 2.0 * math.pi * (k + 0.5) / 4 for k in range(4)]
    assert runner._phases(None) == pytest.approx(expected)
    assert runner._phases([1.0, 2.0]) == [1.0, 2.0]
