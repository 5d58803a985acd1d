import csv
import json

import numpy as np
import pytest
import yaml

from rodplan import bernstein as bz
from rodplan import cli, io
from rodplan import cosserat as cs
from rodplan.errors import ValidationError

STRAIGHT = """
name: straight
rod: {s_f: 0.24, order: [6, 6]}
time: {t_f: 2.0}
formations:
  initial: {type: line}
  final: {type: line}
agents: {count: 4, samples: 5}
"""


def straight_rod(m=6, n=6, s_f=0.24, t_f=2.0):
    nets = [np.zeros((m + 1, n + 1, 3)) for _ in range(6)]
    nets[0][:, :, 2] = (np.arange(m + 1) * s_f / m)[:, None]
    nets[2][:, :, 2] = 1.0
    return cs.RodFields.from_nets(nets, s_f, t_f)


@pytest.fixture
def straight_files(tmp_path):
    scen = tmp_path / "straight.yaml"
    scen.write_text(STRAIGHT)
    sol = tmp_path / "solution.json"
    io.save_solution(sol, straight_rod(), "straight")
    return scen, sol


# ---------------------------------------------------------------- schema


def test_pi_expressions():
    assert io.number("pi/2") == pytest.approx(np.pi / 2)
    assert io.number("0.02*pi") == pytest.approx(0.02 * np.pi)
    assert io.number(3) == 3.0
    with pytest.raises(ValueError):
        io.number("__import__('os')")


def test_unknown_keys_all_listed():
    doc = yaml.safe_load(STRAIGHT)
    doc["bounds"] = {"vmax": 1.0, "v_max": 0.3}
    doc["colour"] = "red"
    doc["formations"]["final"]["radius"] = 2.0
    with pytest.raises(ValidationError) as info:
        io.parse_scenario(doc)
    text = "\n".join(info.value.errors)
    for key in ("bounds.vmax", "colour", "formations.final.radius"):
        assert key in text
    assert len(info.value.errors) == 3


def test_inverted_strain_bounds_rejected():
    doc = yaml.safe_load(STRAIGHT)
    doc["bounds"] = {"nu_min": 3.0, "nu_max": 2.0}
    with pytest.raises(ValidationError):
        io.parse_scenario(doc)


def test_bundled_scenarios_parse():
    assert {"case1", "case2"} <= set(io.bundled_scenarios())
    c1 = io.load_scenario("case1").scenario
    assert c1.final_formation.param_range[1] == pytest.approx(np.pi / 2)
    assert c1.obstacles[0].radius == 0.03
    c2 = io.load_scenario("case2").scenario
    assert c2.final_formation.pitch == pytest.approx(0.02 * np.pi)
    assert c2.bounds.v_max == 0.35


def test_solve_rejects_invalid_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(STRAIGHT + "bounds: {nu_min: 3.0, nu_max: 2.0}\n")
    assert cli.main(["solve", str(bad), "--output", str(tmp_path / "out")]) != 0
    assert "nu_min" in capsys.readouterr().err


# ---------------------------------------------------------------- solution files


def test_solution_round_trip_bit_exact(tmp_path, rng):
    nets = [rng.normal(size=(5, 4, 3)) for _ in range(6)]
    fields = cs.RodFields.from_nets(nets, 0.24, 1.2345678901234567)
    io.save_solution(tmp_path / "s.json", fields)
    back = io.load_solution(tmp_path / "s.json")
    assert back.t_f == fields.t_f
    for a, b in zip(fields.surfaces(), back.surfaces()):
        assert np.array_equal(a.net, b.net)
    doc = json.loads((tmp_path / "s.json").read_text())
    assert "Z-Y-X" in doc["convention"]["euler"]


def test_agents_csv_sorted(tmp_path):
    fields = straight_rod()
    traj = cli.tr.extract_agents(fields, 3, np.linspace(0.0, 2.0, 4))
    io.write_agents_csv(tmp_path / "a.csv", traj)
    with open(tmp_path / "a.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == io.CSV_COLUMNS
    keys = [(int(r[0]), float(r[2])) for r in rows[1:]]
    assert keys == sorted(keys) and len(keys) == 12
    data = io.read_agents_csv(tmp_path / "a.csv")
    assert np.allclose(data[:, 5], np.repeat([0.08, 0.16, 0.24], 4))


# ---------------------------------------------------------------- verify


def test_verify_straight_rod_passes(straight_files, capsys):
    scen, sol = straight_files
    assert cli.main(["verify", str(sol), str(scen)]) == 0
    rep = cli.verify_solution(io.load_solution(sol), io.load_scenario(scen).scenario)
    dyn = [c for c in rep.checks if c.name.startswith("dynamics")][0]
    assert dyn.worst <= 1e-14


def test_verify_locates_corrupted_point(straight_files, tmp_path, capsys):
    scen, sol = straight_files
    doc = json.loads(sol.read_text())
    doc["fields"]["v"][3][2][0] = 0.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    scen.write_text(STRAIGHT + "bounds: {v_max: 0.1}\n")
    assert cli.main(["verify", str(bad), str(scen)]) == 1
    out = capsys.readouterr().out
    assert "FAIL dynamics" in out and "(s=0.1224, t=0.6667)" in out
    # corrupted net entry (3, 2) lands at (6, 4) of the degree-doubled square norm
    assert "FAIL v coefficient bounds" in out and "coefficient (6, 4)" in out


def test_verify_detects_obstacle(straight_files, tmp_path):
    scen, sol = straight_files
    doc = yaml.safe_load(scen.read_text())
    doc["obstacles"] = [{"type": "sphere", "center": [0.0, 0.007, 0.12], "radius": 0.004}]
    rep = cli.verify_solution(io.load_solution(sol), io.parse_scenario(doc).scenario)
    obs = [c for c in rep.checks if c.name.startswith("obstacle")][0]
    assert not obs.passed
    assert obs.worst == pytest.approx(0.002, abs=1e-9)


# ---------------------------------------------------------------- plotdata / extract


def test_plotdata_grids(straight_files, tmp_path):
    scen, sol = straight_files
    out = tmp_path / "plot"
    files = cli.plotdata_command(sol, out, cli.build_parser().parse_args(
        ["plotdata", str(sol), "--scenario", str(scen), "--grid", "7"]))
    data = np.loadtxt(files[0], delimiter=",", skiprows=1)
    assert data.shape == (49, 6)
    assert np.all(data[:, 4] == 0.0)
    assert np.allclose(data[:, 2], 1.0, atol=1e-14)
    planes = json.loads(files[1].read_text())
    assert planes["v_sq"][1] == pytest.approx(0.1225)


def test_norm_grid_matches_direct_eval(rng):
    nets = [rng.normal(size=(4, 3, 3)) for _ in range(6)]
    f = cs.RodFields.from_nets(nets, 0.24, 1.5)
    g = io.norm_grids(f, 7, 5)
    for i in (0, 3, 6):
        for j in (0, 2, 4):
            val = bz.eval(f.v, g["s"][i], g["t"][j])
            assert abs(g["v"][i, j] - val @ val) <= 1e-12


def test_extract_agent_count(straight_files, tmp_path):
    _, sol = straight_files
    assert cli.main(["extract", str(sol), "--agents", "500", "--samples", "3", "--output", str(tmp_path)]) == 0
    data = io.read_agents_csv(tmp_path / "agents_500.csv")
    assert data.shape == (1500, len(io.CSV_COLUMNS))
    assert np.allclose(data[2::3, 5], np.arange(1, 501) * 0.24 / 500)


@pytest.mark.parametrize("cmd", ["solve", "verify", "plotdata", "extract"])
def test_help(cmd, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main([cmd, "--help"])
    assert info.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_solve_straight_rod_end_to_end(straight_files, tmp_path):
    scen, _ = straight_files
    out = tmp_path / "run"
    assert cli.main(["solve", str(scen), "--output", str(out), "--agents", "4"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["verification"]["passed"]
    data = io.read_agents_csv(out / "agents.csv")
    assert np.allclose(data[::5, 5], [0.06, 0.12, 0.18, 0.24], atol=1e-6)
