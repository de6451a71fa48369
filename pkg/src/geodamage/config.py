"""Flat dotted-key run configuration.

File format (one ``key = value`` per line, ``#`` starts a comment)::

    # geodamage-config v1
    mesh.nx = 8
    material.constraint.kind = ball
    load.G = 0 0.5 0.5 -0.3

The first non-blank line must be the versioned header.  Lists are whitespace
or comma separated.  Unknown keys are errors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fem import FeSpace, homogeneous_space, structured_space
from .load import LoadProgram
from .solver import SolverConfig
from .tensor import (
    ConstraintSet,
    DamageDissipation,
    DomainError,
    HardeningProfile,
    HookeLaw,
    MaterialLaw,
)

CONFIG_HEADER = "# geodamage-config v1"
_HEADER_RE = re.compile(r"^#\s*geodamage-config\s+v(\d+)\s*$")


class ConfigError(ValueError):
    """Invalid configuration; carries the line number and field when known."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field {key!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


# key -> (attribute, type); types: float, int, bool, str, floats (list)
_KEYS = {
    "mesh.homogeneous": ("homogeneous", bool),
    "mesh.area": ("area", float),
    "mesh.lx": ("lx", float),
    "mesh.ly": ("ly", float),
    "mesh.nx": ("nx", int),
    "mesh.ny": ("ny", int),
    "material.lambda_lame": ("lambda_lame", float),
    "material.mu": ("mu", float),
    "material.hardening.kind": ("hardening_kind", str),
    "material.hardening.b_max": ("b_max", float),
    "material.hardening.b_floor": ("b_floor", float),
    "material.damage.kind": ("damage_kind", str),
    "material.damage.w1": ("w1", float),
    "material.constraint.kind": ("constraint_kind", str),
    "material.constraint.r_h": ("r_h", float),
    "material.constraint.tau": ("dp_tau", float),
    "material.constraint.kappa": ("dp_kappa", float),
    "material.w_grad_alpha": ("w_grad_alpha", float),
    "material.w_grad_p": ("w_grad_p", float),
    "load.G": ("G", "floats"),
    "load.T": ("T", float),
    "load.ramp_times": ("ramp_times", "floats"),
    "load.ramp_values": ("ramp_values", "floats"),
    "time.k": ("k", int),
    "viscosity.epsilon": ("epsilon", float),
    "viscosity.sweep": ("eps_sweep", "floats"),
    "solver.tol_energy_stagnation": ("tol_energy_stagnation", float),
    "solver.tol_pd": ("tol_pd", float),
    "solver.max_outer": ("max_outer", int),
    "solver.max_inner": ("max_inner", int),
    "solver.linear_solver": ("linear_solver", str),
    "solver.cg_tol": ("cg_tol", float),
    "solver.n_starts": ("n_starts", int),
    "rescale.n_grid": ("n_grid", int),
    "rescale.plateau_threshold": ("plateau_threshold", float),
    "oracle.t": ("oracle_t", float),
    "oracle.alpha_prev": ("oracle_alpha_prev", float),
    "oracle.p_prev": ("oracle_p_prev", "floats"),
    "oracle.tau": ("oracle_tau", float),
    "seed": ("seed", int),
    "output.dir": ("out_dir", str),
}


@dataclass(frozen=True)
class RunConfig:
    homogeneous: bool = False
    area: float = 1.0
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 8
    ny: int = 8
    lambda_lame: float = 1.0
    mu: float = 1.0
    hardening_kind: str = "softening"
    b_max: float = 2.0
    b_floor: float = 2.0
    damage_kind: str = "quadratic"
    w1: float = 1.0
    constraint_kind: str = "ball"
    r_h: float = 0.3
    dp_tau: float = 0.5
    dp_kappa: float = 0.3
    w_grad_alpha: float = 1.0
    w_grad_p: float = 1.0
    G: tuple = (0.0, 0.5, 0.5, -0.3)
    T: float = 1.0
    ramp_times: tuple = ()
    ramp_values: tuple = ()
    k: int = 50
    epsilon: float = 0.0
    eps_sweep: tuple = ()
    tol_energy_stagnation: float = 1e-10
    tol_pd: float = 1e-9
    max_outer: int = 200
    max_inner: int = 5000
    linear_solver: str = "direct_sparse"
    cg_tol: float = 1e-12
    n_starts: int = 3
    n_grid: int = 0
    plateau_threshold: float = -1.0
    oracle_t: float = 1.0
    oracle_alpha_prev: float = 1.0
    oracle_p_prev: tuple = (0.0, 0.0, 0.0)
    oracle_tau: float = 0.1
    seed: int = 0
    out_dir: str = "out"
    source_text: str = field(default="", compare=False, repr=False)

    # -- builders -------------------------------------------------------------

    def law(self) -> MaterialLaw:
        if self.constraint_kind == "ball":
            K = ConstraintSet("ball", r_h=self.r_h)
        else:
            K = ConstraintSet(self.constraint_kind, tau=self.dp_tau, kappa=self.dp_kappa, dim=2)
        return MaterialLaw(
            HookeLaw(self.lambda_lame, self.mu),
            HardeningProfile(self.hardening_kind, self.b_max, self.b_floor),
            DamageDissipation(self.damage_kind, self.w1),
            K,
            w_grad_alpha=self.w_grad_alpha,
            w_grad_p=self.w_grad_p,
        )

    def fe(self) -> FeSpace:
        if self.homogeneous:
            return homogeneous_space(self.area)
        return structured_space(self.lx, self.ly, self.nx, self.ny)

    def load(self) -> LoadProgram:
        return LoadProgram(np.array(self.G, dtype=float).reshape(2, 2), self.T,
                           tuple(self.ramp_times), tuple(self.ramp_values))

    def solver(self) -> SolverConfig:
        return SolverConfig(
            tol_energy_stagnation=self.tol_energy_stagnation,
            tol_pd=self.tol_pd,
            max_outer=self.max_outer,
            max_inner=self.max_inner,
            linear_solver=self.linear_solver,
            cg_tol=self.cg_tol,
            n_starts=self.n_starts,
            seed=self.seed,
        )

    def validate(self) -> "RunConfig":
        """Build every object once so that constitutive violations surface as ConfigError."""
        if len(self.G) != 4:
            raise ConfigError("load.G needs 4 entries (row-major 2x2)", key="load.G")
        checks = [
            ("material", self.law),
            ("mesh", self.fe),
            ("load", self.load),
            ("solver", self.solver),
        ]
        for name, build in checks:
            try:
                build()
            except (ValueError, DomainError) as exc:
                raise ConfigError(str(exc), key=name) from exc
        if self.k < 1:
            raise ConfigError("time.k must be >= 1", key="time.k")
        if self.epsilon < 0.0 or any(e <= 0.0 for e in self.eps_sweep):
            raise ConfigError("viscosities must be positive (epsilon = 0 selects the energetic scheme)",
                              key="viscosity")
        if len(self.oracle_p_prev) != 3:
            raise ConfigError("oracle.p_prev needs 3 Voigt entries", key="oracle.p_prev")
        return self

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def to_text(self) -> str:
        lines = [CONFIG_HEADER]
        for key, (attr, typ) in _KEYS.items():
            v = getattr(self, attr)
            if typ == "floats":
                txt = " ".join(repr(float(x)) for x in v)
                if not txt:
                    continue
            elif typ is bool:
                txt = "true" if v else "false"
            elif typ is float:
                txt = repr(float(v))
            else:
                txt = str(v)
            lines.append(f"{key} = {txt}")
        return "\n".join(lines) + "\n"


def _convert(raw: str, typ, lineno: int, key: str):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if typ is int:
            return int(raw)
        if typ is float:
            v = float(raw)
            if not np.isfinite(v):
                raise ValueError("value must be finite")
            return v
        if typ == "floats":
            parts = [x for x in re.split(r"[\s,]+", raw) if x]
            vals = tuple(float(x) for x in parts)
            if not all(np.isfinite(vals)):
                raise ValueError("values must be finite")
            return vals
        return raw
    except ValueError as exc:
        raise ConfigError(str(exc), lineno, key) from exc


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration file's text."""
    values = {}
    seen_header = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if not seen_header:
            m = _HEADER_RE.match(stripped)
            if m is None:
                raise ConfigError(f"missing header {CONFIG_HEADER!r}", lineno)
            if m.group(1) != "1":
                raise ConfigError(f"unsupported config version {m.group(1)}", lineno)
            seen_header = True
            continue
        if stripped.startswith("#"):
            continue
        stripped = stripped.split("#", 1)[0].strip()
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", lineno)
        key, raw = (x.strip() for x in stripped.split("=", 1))
        if key not in _KEYS:
            raise ConfigError("unknown key", lineno, key)
        attr, typ = _KEYS[key]
        if attr in values:
            raise ConfigError("duplicate key", lineno, key)
        values[attr] = _convert(raw, typ, lineno, key)
    if not seen_header:
        raise ConfigError(f"missing header {CONFIG_HEADER!r}")
    cfg = RunConfig(**values, source_text=text)
    return cfg.validate()


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config(text)


def config_keys() -> list[str]:
    return list(_KEYS)

