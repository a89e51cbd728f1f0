import xml.etree.ElementTree as ET

import numpy as np
import pytest

from geoimp import cli, robot
from geoimp import config as cfg


def write_config(tmp_path, name="short.cfg", **edits):
    """Shipped regulation config with a 50 ms horizon and optional key overrides."""
    lines = []
    for line in cfg.shipped_config("regulation").splitlines():
        key = line.split("=")[0].strip()
        if key == "duration":
            line = "duration = 0.05"
        if key in edits:
            line = f"{key} = {edits.pop(key)}"
        lines.append(line)
    extra = edits.pop("_extra", "")
    assert not edits, edits
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n" + extra)
    return path


def test_so2_curves(tmp_path):
    assert cli.main(["so2-curves", "--out", str(tmp_path)]) == 0
    data = np.loadtxt(tmp_path / "so2_curves.csv", delimiter=",", skiprows=1)
    assert data.shape == (181, 5)
    assert np.all(data[0] == 0.0)
    half = data[90]
    assert half[0] == pytest.approx(np.pi / 2, abs=1e-12)
    assert half[1] == pytest.approx(2.0, abs=1e-11) and half[3] == pytest.approx(2.0, abs=1e-11)
    last = data[-1]
    assert abs(last[3]) <= 1e-12
    assert last[4] == pytest.approx(np.pi, abs=1e-11)
    for name in ("so2_error_functions.svg", "so2_elastic_forces.svg"):
        assert ET.parse(tmp_path / name).getroot().tag.endswith("svg")


def test_run_writes_logs_and_table(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(config), "--out", str(out), "--plots"]) == 0
    for name in ("gic1.csv", "gic2.csv", "metrics.txt", "position_x.svg", "error_function.svg", "trajectory_3d.svg"):
        assert (out / name).exists(), name
    table = (out / "metrics.txt").read_text()
    assert "GIC-1" in table and "GIC-2" in table and "Psi_SO3" in table
    header = (out / "gic1.csv").read_text().splitlines()[0]
    assert header.startswith("t,q1,") and header.endswith("psi1,psi2,potential,lyap,power")
    for name in ("position_x.svg", "trajectory_3d.svg"):
        assert ET.parse(out / name).getroot().tag.endswith("svg")


def test_run_is_deterministic(tmp_path):
    config = write_config(tmp_path)
    for sub in ("a", "b"):
        assert cli.main(["run", "--config", str(config), "--out", str(tmp_path / sub), "--variants", "2"]) == 0
    assert (tmp_path / "a" / "gic2.csv").read_bytes() == (tmp_path / "b" / "gic2.csv").read_bytes()
    assert not (tmp_path / "a" / "gic1.csv").exists()


def test_run_compare(tmp_path):
    config = write_config(tmp_path)
    assert cli.main(["run", "--config", str(config), "--out", str(tmp_path / "c"), "--compare"]) == 0
    assert "max pointwise position difference" in (tmp_path / "c" / "metrics.txt").read_text()


def test_run_bad_dt(tmp_path, capsys):
    config = write_config(tmp_path, dt="0")
    assert cli.main(["run", "--config", str(config), "--out", str(tmp_path / "o")]) == 1
    assert "scenario.dt" in capsys.readouterr().err


def test_run_singular_start(tmp_path, capsys):
    config = write_config(tmp_path, q0="0 -1.5707963267948966 0 -1.5707963267948966 0 0")
    assert cli.main(["run", "--config", str(config), "--out", str(tmp_path / "o")]) == 2
    assert "condition number" in capsys.readouterr().err


def test_run_bad_variants(tmp_path, capsys):
    config = write_config(tmp_path)
    assert cli.main(["run", "--config", str(config), "--out", str(tmp_path / "o"), "--variants", "3"]) == 1
    assert "--variants" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["regulation", "tracking"])
def test_validate_shipped(name, capsys):
    assert cli.main(["validate", "--config", name]) == 0
    assert capsys.readouterr().out.startswith("ok:")


def test_validate_negative_mass(tmp_path, capsys):
    text = robot.dump_robot(robot.load_preset("ur5e")).replace("[link5]\nmass = 1.3", "[link5]\nmass = -1.3")
    (tmp_path / "bad.robot").write_text(text)
    cfg_text = cfg.shipped_config("regulation").replace("preset = ur5e", "file = bad.robot")
    (tmp_path / "neg.cfg").write_text(cfg_text)
    assert cli.main(["validate", "--config", str(tmp_path / "neg.cfg")]) == 1
    assert "link5" in capsys.readouterr().out


def test_validate_non_spd_damping(tmp_path, capsys):
    config = write_config(tmp_path, kd="50 50 -3 50 50 50")
    assert cli.main(["validate", "--config", str(config)]) == 1
    out = capsys.readouterr().out
    assert "gains.kd" in out and "smallest eigenvalue -3" in out


def test_validate_singular_and_unknown_key(tmp_path, capsys):
    config = write_config(tmp_path, q0="0 -1.5707963267948966 0 -1.5707963267948966 0 0")
    assert cli.main(["validate", "--config", str(config)]) == 1
    assert "condition number" in capsys.readouterr().out
    config = write_config(tmp_path, "unknown.cfg", _extra="colour = red\n")
    assert cli.main(["validate", "--config", str(config)]) == 1
    assert "scenario.colour" in capsys.readouterr().out


def test_validate_unreachable_goal(tmp_path, capsys):
    config = write_config(tmp_path, offset="3 0 0")
    assert cli.main(["validate", "--config", str(config)]) == 1
    assert "reach" in capsys.readouterr().out


def test_config_parsing_details(tmp_path):
    s = cfg.load_scenario("tracking")
    assert s.kind == "tracking" and s.t_traj == 3.0 and s.variants == (1, 2)
    np.testing.assert_array_equal(s.gains.kd, 50 * np.eye(6))
    full = " ".join(["1 0 0", "0 2 0", "0 0 3"])
    s = cfg.parse_scenario(cfg.shipped_config("regulation").replace("kp = 100 100 100", f"kp = {full}"))
    np.testing.assert_array_equal(s.gains.kp, np.diag([1.0, 2.0, 3.0]))
    with pytest.raises(cfg.ConfigError, match="gains.kp"):
        cfg.parse_scenario("[gains]\nkp = 1 2\n")
    with pytest.raises(cfg.ConfigError, match="scenario.t_traj"):
        cfg.parse_scenario("[scenario]\ntype = tracking\nduration = 1\nt_traj = 2\n")
    with pytest.raises(cfg.ConfigError, match="extra"):
        cfg.parse_scenario("[extra]\nx = 1\n")
    with pytest.raises(cfg.ConfigError, match="no such file"):
        cfg.load_scenario(tmp_path / "missing.cfg")
    # an empty file is all defaults
    s = cfg.parse_scenario("")
    assert s.kind == "regulation" and s.dt == 1e-3 and s.duration == 5.0
