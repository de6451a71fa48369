"""CSV emission and read-back of trajectories, checks and rescaling output.

Every file starts with a ``# geodamage <kind> v<N>`` line followed by a
column header.  Floats use 17 significant digits so that a written and
re-read trajectory is bit-identical.  Column layouts are documented in
SCHEMA.md.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .energy import State
from .evolution import STEP_FIELDS, Trajectory, delta_k, discrete_energy_report

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"


class SchemaError(ValueError):
    """A file does not match the expected header or column layout."""


def _header(kind: str) -> str:
    return f"# geodamage {kind} v{SCHEMA_VERSION}"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return FLOAT_FMT % float(x)


def write_table(path: Path, kind: str, columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header(kind) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def read_table(path: Path, kind: str):
    """Return (columns, rows as lists of strings)."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != _header(kind):
            raise SchemaError(f"{path}: expected header {_header(kind)!r}, found {first!r}")
        r = csv.reader(fh)
        columns = next(r)
        rows = [row for row in r if row]
    for i, row in enumerate(rows):
        if len(row) != len(columns):
            raise SchemaError(f"{path}: row {i + 1} has {len(row)} fields, expected {len(columns)}")
    return columns, rows


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


def state_columns(n_nodes: int, n_u: int, n_elems: int, m: int) -> list[str]:
    cols = ["i", "t"]
    cols += [f"alpha_{j}" for j in range(n_nodes)]
    cols += [f"u_{j}_{c}" for j in range(n_u) for c in range(2)]
    cols += [f"e_{j}_{c}" for j in range(n_elems) for c in range(m)]
    cols += [f"p_{j}_{c}" for j in range(n_nodes) for c in range(m)]
    return cols


def write_states(path: Path, traj: Trajectory) -> None:
    fe = traj.fe
    n_u = 0 if fe.homogeneous else fe.n_nodes
    cols = state_columns(fe.n_nodes, n_u, fe.n_elems, fe.m)
    rows = []
    for i, s in enumerate(traj.states):
        rows.append([i, s.t, *s.alpha, *np.asarray(s.u).ravel(), *s.e.ravel(), *s.p.ravel()])
    write_table(path, "states", cols, rows)


def read_states(path: Path, fe) -> list[State]:
    n_u = 0 if fe.homogeneous else fe.n_nodes
    cols, rows = read_table(path, "states")
    expected = state_columns(fe.n_nodes, n_u, fe.n_elems, fe.m)
    if cols != expected:
        raise SchemaError(f"{path}: column layout does not match the configured mesh")
    out = []
    nv, ne, m = fe.n_nodes, fe.n_elems, fe.m
    for row in rows:
        v = np.array([float(x) for x in row[1:]])
        t = v[0]
        o = 1
        alpha = v[o:o + nv]
        o += nv
        u = v[o:o + 2 * n_u].reshape(n_u, 2)
        o += 2 * n_u
        e = v[o:o + ne * m].reshape(ne, m)
        o += ne * m
        p = v[o:o + nv * m].reshape(nv, m)
        out.append(State(t=float(t), alpha=alpha.copy(), u=u.copy(), e=e.copy(), p=p.copy()))
    return out


# ---------------------------------------------------------------------------
# Trajectory directories
# ---------------------------------------------------------------------------

ENERGY_COLUMNS = ["i", "t", "elastic", "damage", "grad_alpha", "hardening", "grad_p", "total"]
STEP_COLUMNS = list(STEP_FIELDS) + ["slack"]


def write_trajectory(directory, traj: Trajectory, cfg: RunConfig) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.txt").write_text(cfg.with_overrides(epsilon=traj.eps, k=traj.k).to_text())
    write_states(d / "states.csv", traj)
    energies = traj.energies()
    write_table(d / "energy.csv", "energy", ENERGY_COLUMNS,
                [[i] + b.row(s.t) for i, (s, b) in enumerate(zip(traj.states, energies))])
    write_table(d / "steps.csv", "steps", STEP_COLUMNS,
                [[r[c] for c in STEP_COLUMNS] for r in traj.records])
    if not traj.fe.homogeneous:
        (d / "mesh.txt").write_text(traj.fe.mesh.export_text())
    return d


def read_trajectory(directory):
    """Rebuild (trajectory, config) from a directory written by :func:`write_trajectory`."""
    d = Path(directory)
    cfg = parse_config((d / "config.txt").read_text())
    law, fe, load = cfg.law(), cfg.fe(), cfg.load()
    states = read_states(d / "states.csv", fe)
    cols, rows = read_table(d / "steps.csv", "steps")
    if cols != STEP_COLUMNS:
        raise SchemaError(f"{d / 'steps.csv'}: unexpected columns")
    records = []
    for row in rows:
        rec = {}
        for c, x in zip(cols, row):
            rec[c] = int(x) if c in ("i", "sweeps", "flagged") else float(x)
        records.append(rec)
    if len(records) != len(states) - 1:
        raise SchemaError("steps.csv and states.csv disagree on the number of steps")
    traj = Trajectory(states, records, law, fe, load, cfg.epsilon, cfg.k, delta_k=delta_k(load, law, fe, cfg.k))
    return traj, cfg


def write_checks(path: Path, reports) -> None:
    write_table(path, "checks", ["check_id", "residual", "tolerance", "passed", "location"],
                [[r.check_id, r.residual, r.tolerance, int(r.passed), r.location] for r in reports])


RESCALED_COLUMNS = ["s", "t0", "slope_t", "slope_alpha_h1", "slope_e_l2", "slope_p_h1", "psi", "plateau"]


def write_rescaled(path: Path, rows) -> None:
    write_table(path, "rescaled", RESCALED_COLUMNS, rows)


def write_bv_report(path: Path, report, extra: dict | None = None) -> None:
    data = {
        "schema": f"geodamage bv_report v{SCHEMA_VERSION}",
        "residuals": {k: float(v) for k, v in report.residuals.items()},
        "plateaus": [[float(a), float(b)] for a, b in report.plateaus],
        "a0_in_u0": bool(report.a0_in_u0),
        "scale": float(report.scale),
    }
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_energy_report(path: Path, traj: Trajectory) -> None:
    rep = discrete_energy_report(traj)
    write_table(path, "energy_inequality", ["i", "t", "lhs", "rhs", "slack"],
                zip(rep["i"], rep["t"], rep["lhs"], rep["rhs"], rep["slack"]))


EPS_COMPARE_COLUMNS = ["eps_a", "eps_b", "S_a", "S_b", "distance"]


def write_eps_compare(path: Path, rows) -> None:
    write_table(path, "eps_compare", EPS_COMPARE_COLUMNS, [[r[c] for c in EPS_COMPARE_COLUMNS] for r in rows])


def write_solver_trace(path: Path, trace, kkt=None) -> None:
    kkt = [float("nan")] * len(trace) if kkt is None else kkt
    write_table(path, "solver_trace", ["sweep", "objective", "kkt_residual"],
                [[i, f, r] for i, (f, r) in enumerate(zip(trace, kkt))])
