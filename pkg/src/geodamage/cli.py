"""Command-line entry point: ``geodamage {run,check,sweep-eps,rescale,oracle}``.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .diagnostics import run_all_checks
from .energy import State, total_energy, zero_state
from .evolution import (
    EnergyInequalityError,
    InitialStateError,
    discrete_energy_report,
    run_energetic,
    run_viscous,
    viscous_bounds,
)
from .io import (
    SchemaError,
    read_trajectory,
    write_bv_report,
    write_checks,
    write_energy_report,
    write_eps_compare,
    write_rescaled,
    write_trajectory,
)
from .oracles import brute_force_oracle_homogeneous
from .rescaling import (
    RescalingError,
    arclength_parametrize,
    check_bv_conditions,
    detect_plateaus,
    eps_limit_compare,
    rescaled_rows,
)
from .solver import SolverError, incremental_minimize

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3
SOLVER_ERRORS = (SolverError, EnergyInequalityError, InitialStateError)


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this subcommand")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig | None) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(cfg.out_dir if cfg is not None else "out")


def _write_failure(out: Path, exc: Exception) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.txt").write_text(f"{type(exc).__name__}: {exc}\n\n{traceback.format_exc()}")


def _simulate(cfg: RunConfig, eps: float):
    law, fe, load = cfg.law(), cfg.fe(), cfg.load()
    if eps > 0.0:
        return run_viscous(load, law, fe, cfg.k, eps, cfg.solver())
    return run_energetic(load, law, fe, cfg.k, cfg.solver())


def _summary(traj) -> str:
    E = total_energy(traj.states[-1], traj.law, traj.fe).total
    diss = float(np.sum(traj.column("dissipation"))) if traj.records else 0.0
    slack = discrete_energy_report(traj)["slack"]
    return (f"final_energy={E:.10g} total_dissipation={diss:.10g} "
            f"min_slack={float(np.min(slack)):.3e} max_slack={float(np.max(slack)):.3e}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    try:
        traj = _simulate(cfg, cfg.epsilon)
    except SOLVER_ERRORS as exc:
        _write_failure(out, exc)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_trajectory(out, traj, cfg)
    write_energy_report(out / "energy_inequality.csv", traj)
    _say(args, _summary(traj))
    return EXIT_OK


def cmd_check(args) -> int:
    directory = Path(args.directory) if args.directory else _out_dir(args, None)
    try:
        traj, _ = read_trajectory(directory)
    except (OSError, SchemaError, ConfigError) as exc:
        print(f"cannot read trajectory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    reports = run_all_checks(traj)
    write_checks(directory / "checks.csv", reports)
    for r in reports:
        _say(args, r.line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK


def _rescale_dir(directory: Path, cfg: RunConfig, traj) -> dict:
    rt = arclength_parametrize(traj, cfg.n_grid or None)
    thr = None if cfg.plateau_threshold < 0.0 else cfg.plateau_threshold
    plateaus = detect_plateaus(rt, thr)
    report = check_bv_conditions(rt, plateaus=plateaus)
    write_rescaled(directory / "rescaled.csv", rescaled_rows(rt, report))
    bounds = viscous_bounds(traj)
    write_bv_report(directory / "bv_report.json", report, {"eps": traj.eps, "k": traj.k, "S": rt.S, **bounds})
    return {"rt": rt, "report": report, "bounds": bounds}


def cmd_rescale(args) -> int:
    directory = Path(args.directory) if args.directory else _out_dir(args, None)
    try:
        traj, cfg = read_trajectory(directory)
        res = _rescale_dir(directory, cfg, traj)
    except (OSError, SchemaError, ConfigError, RescalingError) as exc:
        print(f"cannot rescale: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for k, v in res["report"].residuals.items():
        _say(args, f"{k} = {v:.6e}")
    return EXIT_OK


def _sweep_worker(cfg_text: str, eps: float, out: str):
    from .config import parse_config

    cfg = parse_config(cfg_text)
    try:
        traj = _simulate(cfg, eps)
    except SOLVER_ERRORS as exc:
        _write_failure(Path(out), exc)
        return eps, str(exc)
    write_trajectory(out, traj, cfg)
    write_energy_report(Path(out) / "energy_inequality.csv", traj)
    return eps, None


def cmd_sweep_eps(args) -> int:
    cfg = _config(args)
    eps_list = list(cfg.eps_sweep) or ([cfg.epsilon] if cfg.epsilon > 0.0 else [])
    if not eps_list:
        print("config error: viscosity.sweep (or a positive viscosity.epsilon) is required", file=sys.stderr)
        return EXIT_CONFIG
    eps_list = sorted(set(eps_list), reverse=True)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    dirs = {e: out / f"eps_{e:.6g}" for e in eps_list}
    text = cfg.to_text()
    if args.jobs > 1 and len(eps_list) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_worker, [text] * len(eps_list), eps_list,
                                    [str(dirs[e]) for e in eps_list]))
    else:
        results = [_sweep_worker(text, e, str(dirs[e])) for e in eps_list]
    failed = [(e, msg) for e, msg in results if msg is not None]
    if failed:
        for e, msg in failed:
            print(f"solver failure at eps={e}: {msg}", file=sys.stderr)
        return EXIT_SOLVER
    rts = []
    w11 = {}
    for e in eps_list:
        traj, c = read_trajectory(dirs[e])
        res = _rescale_dir(dirs[e], c, traj)
        rts.append(res["rt"])
        w11[e] = res["bounds"]["alpha_dot_h1"]
        _say(args, f"eps={e:.6g} S={res['rt'].S:.6g} sum_tau_alpha_dot_h1={w11[e]:.6g} "
                   f"ev3={res['report'].residuals['ev3_psi_outside_plateaus']:.3e}")
    if len(rts) >= 2:
        rows = eps_limit_compare(rts)
        write_eps_compare(out / "eps_compare.csv", rows)
        for r in rows:
            _say(args, f"distance eps {r['eps_a']:.6g} -> {r['eps_b']:.6g}: {r['distance']:.6e}")
    vals = np.array(list(w11.values()))
    ratio = float(vals.max() / vals.min()) if np.all(vals > 0.0) else (1.0 if np.all(vals == 0.0) else np.inf)
    (out / "sweep_summary.json").write_text(json.dumps(
        {"eps": eps_list, "alpha_dot_h1": [w11[e] for e in eps_list], "w11_ratio": ratio,
         "w11_uniform": bool(ratio < 3.0)}, indent=2) + "\n")
    _say(args, f"W11 ratio across eps = {ratio:.4g}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args)
    if not cfg.homogeneous:
        cfg = cfg.with_overrides(homogeneous=True)
    law, fe, load = cfg.law(), cfg.fe(), cfg.load()
    prev = zero_state(fe)
    prev.alpha[:] = cfg.oracle_alpha_prev
    prev.p[0] = np.array(cfg.oracle_p_prev)
    prev.t = 0.0
    eps = cfg.epsilon
    try:
        res = incremental_minimize(prev, load, cfg.oracle_t, eps, cfg.oracle_tau, law, fe, cfg.solver())
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _, e_oracle = brute_force_oracle_homogeneous(prev, load, cfg.oracle_t, eps, cfg.oracle_tau, law, fe)
    gap = res.objective - e_oracle
    rel = abs(gap) / max(1.0, abs(e_oracle))
    print(f"solver={res.objective:.12g} oracle={e_oracle:.12g} gap={gap:.3e} relative={rel:.3e}")
    return EXIT_OK if rel <= 1e-3 else EXIT_CHECK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    common.add_argument("--seed", type=int, metavar="N", help="override the configured seed")

    parser = argparse.ArgumentParser(prog="geodamage", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run an energetic or viscous evolution")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("check", parents=[common], help="run the diagnostics suite on a trajectory directory")
    p.add_argument("directory", nargs="?", help="trajectory directory (default: --out)")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("sweep-eps", parents=[common], help="viscous runs over an eps list plus rescaling")
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    p.set_defaults(func=cmd_sweep_eps)
    p = sub.add_parser("rescale", parents=[common], help="arc-length rescaling and BV report of a viscous run")
    p.add_argument("directory", nargs="?", help="trajectory directory (default: --out)")
    p.set_defaults(func=cmd_rescale)
    p = sub.add_parser("oracle", parents=[common], help="compare one homogeneous step with the brute-force oracle")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
