import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from geodamage import LoadProgram
from geodamage.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main
from geodamage.config import CONFIG_HEADER, ConfigError, RunConfig, config_keys, load_config, parse_config
from geodamage.diagnostics import run_all_checks
from geodamage.evolution import run_viscous
from geodamage.io import SchemaError, read_table, read_trajectory, write_trajectory

from .conftest import BENCH_G

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_cfg(**kw) -> RunConfig:
    base = dict(nx=3, ny=3, k=6)
    base.update(kw)
    return RunConfig(**base)


def write_cfg(path: Path, cfg: RunConfig) -> Path:
    path.write_text(cfg.to_text())
    return path


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_config_round_trip():
    cfg = small_cfg(eps_sweep=(0.1, 0.01), ramp_times=(0.0, 1.0), ramp_values=(0.0, 2.0), seed=7)
    back = parse_config(cfg.to_text())
    assert back == cfg
    assert set(config_keys()) >= {"mesh.nx", "load.G", "viscosity.sweep", "seed"}


def test_shipped_configs_parse():
    for p in sorted(CONFIGS.glob("*.cfg")):
        load_config(p)
    bench = load_config(CONFIGS / "benchmark.cfg")
    assert bench.with_overrides(out_dir="out", eps_sweep=(), source_text="") == RunConfig()


@pytest.mark.parametrize(
    "body, key",
    [
        ("mesh.nx = eight", "mesh.nx"),
        ("mesh.colour = red", "mesh.colour"),
        ("material.constraint.r_h = -1", "material"),
        ("load.G = 1 2 3", "load.G"),
        ("time.k = 0", "time.k"),
        ("viscosity.sweep = 0.1 -0.1", "viscosity"),
        ("mesh.homogeneous = maybe", "mesh.homogeneous"),
    ],
)
def test_malformed_config_names_the_field(body, key):
    with pytest.raises(ConfigError) as info:
        parse_config(f"{CONFIG_HEADER}\n{body}\n")
    assert info.value.key == key
    assert key in str(info.value)


def test_config_structure_errors():
    with pytest.raises(ConfigError, match="header"):
        parse_config("mesh.nx = 4\n")
    with pytest.raises(ConfigError, match="version"):
        parse_config("# geodamage-config v9\n")
    with pytest.raises(ConfigError) as info:
        parse_config(f"{CONFIG_HEADER}\nmesh.nx = 4\nmesh.nx = 5\n")
    assert info.value.line == 3
    with pytest.raises(ConfigError):
        parse_config(f"{CONFIG_HEADER}\njust words\n")


# ---------------------------------------------------------------------------
# trajectory files
# ---------------------------------------------------------------------------


def test_trajectory_round_trip_gives_identical_checks(tmp_path):
    cfg = small_cfg(epsilon=0.05)
    traj = run_viscous(cfg.load(), cfg.law(), cfg.fe(), cfg.k, cfg.epsilon)
    write_trajectory(tmp_path, traj, cfg)
    back, cfg2 = read_trajectory(tmp_path)
    assert cfg2.epsilon == 0.05 and cfg2.k == cfg.k
    for a, b in zip(traj.states, back.states):
        for f in ("t", "alpha", "u", "e", "p"):
            assert np.array_equal(getattr(a, f), getattr(b, f))
    assert back.records == [dict(r) for r in traj.records]
    assert [r.line() for r in run_all_checks(traj)] == [r.line() for r in run_all_checks(back)]


def test_homogeneous_round_trip(tmp_path):
    cfg = small_cfg(homogeneous=True, epsilon=0.05)
    traj = run_viscous(cfg.load(), cfg.law(), cfg.fe(), cfg.k, cfg.epsilon)
    write_trajectory(tmp_path, traj, cfg)
    back, _ = read_trajectory(tmp_path)
    assert np.array_equal(back.alpha, traj.alpha)
    assert not (tmp_path / "mesh.txt").exists()


def test_schema_errors(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("# geodamage steps v1\na,b\n1,2\n")
    with pytest.raises(SchemaError):
        read_table(f, "states")
    f.write_text("# geodamage steps v1\na,b\n1,2,3\n")
    with pytest.raises(SchemaError):
        read_table(f, "steps")


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def test_cli_run_zero_load(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg", small_cfg(G=(0.0, 0.0, 0.0, 0.0)))
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert "total_dissipation=0 " in capsys.readouterr().out
    for name in ("config.txt", "states.csv", "energy.csv", "steps.csv", "energy_inequality.csv", "mesh.txt"):
        assert (out / name).exists(), name
    cols, rows = read_table(out / "steps.csv", "steps")
    assert all(float(r[cols.index("dissipation")]) == 0.0 for r in rows)
    assert main(["check", str(out), "--quiet"]) == EXIT_OK
    cols, rows = read_table(out / "checks.csv", "checks")
    assert all(r[cols.index("passed")] == "1" for r in rows)


def test_cli_run_files_follow_schema(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg", small_cfg())
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    cols, rows = read_table(out / "energy.csv", "energy")
    assert cols == ["i", "t", "elastic", "damage", "grad_alpha", "hardening", "grad_p", "total"]
    assert len(rows) == 7
    cols, rows = read_table(out / "states.csv", "states")
    assert cols[:3] == ["i", "t", "alpha_0"] and len(rows) == 7
    assert main(["check", str(out), "--quiet"]) == EXIT_OK


def test_cli_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(f"{CONFIG_HEADER}\nmaterial.constraint.r_h = zero\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "material.constraint.r_h" in capsys.readouterr().err
    assert main(["run", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_cli_check_detects_tampered_alpha(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg", small_cfg())
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    path = out / "states.csv"
    lines = path.read_text().splitlines()
    cols = lines[1].split(",")
    j = cols.index("alpha_3")
    # alpha at node 3 rises from 0.5 to 0.9 between states 2 and 3
    for line_no, value in ((4, "0.5"), (5, "0.9")):
        row = lines[line_no].split(",")
        row[j] = value
        lines[line_no] = ",".join(row)
    path.write_text("\n".join(lines) + "\n")
    assert main(["check", str(out)]) == EXIT_CHECK
    text = capsys.readouterr().out
    assert "FAIL irreversibility" in text


def test_cli_check_missing_directory(tmp_path):
    assert main(["check", str(tmp_path / "nothing"), "--quiet"]) == EXIT_CONFIG


def test_cli_sweep_zero_load_gives_zero_distances(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg", small_cfg(G=(0.0, 0.0, 0.0, 0.0), eps_sweep=(0.1, 0.01)))
    out = tmp_path / "sweep"
    assert main(["sweep-eps", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    cols, rows = read_table(out / "eps_compare.csv", "eps_compare")
    assert len(rows) == 1 and float(rows[0][cols.index("distance")]) == 0.0
    for e in ("0.1", "0.01"):
        d = out / f"eps_{e}"
        assert (d / "rescaled.csv").exists() and (d / "bv_report.json").exists()
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert summary["eps"] == [0.1, 0.01]


def test_cli_single_eps_sweep_matches_run_and_rescale(tmp_path):
    cfg = small_cfg(eps_sweep=(0.05,))
    p = write_cfg(tmp_path / "c.cfg", cfg)
    assert main(["sweep-eps", "--config", str(p), "--out", str(tmp_path / "sw"), "--quiet"]) == EXIT_OK
    p2 = write_cfg(tmp_path / "c2.cfg", small_cfg(epsilon=0.05))
    assert main(["run", "--config", str(p2), "--out", str(tmp_path / "r"), "--quiet"]) == EXIT_OK
    assert main(["rescale", str(tmp_path / "r"), "--quiet"]) == EXIT_OK
    a = json.loads((tmp_path / "sw" / "eps_0.05" / "bv_report.json").read_text())
    b = json.loads((tmp_path / "r" / "bv_report.json").read_text())
    assert a == b
    assert (tmp_path / "sw" / "eps_0.05" / "rescaled.csv").read_text() == (tmp_path / "r" / "rescaled.csv").read_text()


def test_cli_sweep_needs_viscosity(tmp_path):
    p = write_cfg(tmp_path / "c.cfg", small_cfg())
    assert main(["sweep-eps", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_CONFIG


@pytest.mark.parametrize("G", [(0.0, 0.0, 0.0, 0.0), (0.0, 0.02, 0.02, -0.01), tuple(BENCH_G.ravel())],
                         ids=["zero", "sub_yield", "supra_yield"])
def test_cli_oracle(tmp_path, capsys, G):
    p = write_cfg(tmp_path / "c.cfg", small_cfg(homogeneous=True, G=G, epsilon=0.01))
    assert main(["oracle", "--config", str(p)]) == EXIT_OK
    out = capsys.readouterr().out
    gap = float(out.split("gap=")[1].split()[0])
    if G == (0.0, 0.0, 0.0, 0.0):
        assert gap == 0.0
    else:
        assert abs(gap) <= 1e-3


def test_cli_shipped_oracle_config():
    assert main(["oracle", "--config", str(CONFIGS / "oracle.cfg")]) == EXIT_OK


def test_cli_version_and_entry_point():
    r = subprocess.run([sys.executable, "-m", "geodamage.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("geodamage ")
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0


def test_runs_deterministic_for_fixed_seed(tmp_path):
    p = write_cfg(tmp_path / "c.cfg", small_cfg(epsilon=0.05, seed=3))
    for name in ("a", "b"):
        assert main(["run", "--config", str(p), "--out", str(tmp_path / name), "--quiet", "--seed", "3"]) == EXIT_OK
    for f in ("states.csv", "steps.csv", "energy.csv"):
        assert (tmp_path / "a" / f).read_text() == (tmp_path / "b" / f).read_text()


def test_load_program_validation():
    with pytest.raises(ValueError):
        LoadProgram(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        LoadProgram(BENCH_G, ramp_times=(0.0, 0.5), ramp_values=(0.0, 1.0))
    with pytest.raises(ValueError):
        LoadProgram(BENCH_G, ramp_times=(0.0, 0.0, 1.0), ramp_values=(0.0, 0.0, 1.0))
