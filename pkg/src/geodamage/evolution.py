"""Time marching of the incremental scheme on a uniform grid.

eps = 0 gives the energetic scheme, eps > 0 the viscous one; both share the
incremental solver.  Every step stores the quantities the diagnostics need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import (
    EnergyBreakdown,
    State,
    generalized_stress,
    partial_alpha_vector,
    plastic_potential,
    total_energy,
    zero_state,
)
from .fem import FeSpace
from .load import LoadProgram
from .solver import SolverConfig, elastic_operator, incremental_minimize
from .tensor import MaterialLaw

STEP_FIELDS = (
    "i", "t", "dissipation", "viscous", "work_left", "work_trapezoid", "kt_residual",
    "hill_residual", "hill_residual_end", "d_alpha_l2", "d_alpha_l1", "d_alpha_h1", "d_e_l2",
    "d_p_l2", "d_p_h1", "d_p_l1", "d_strain_l2", "objective", "sweeps", "flagged",
)


class InitialStateError(RuntimeError):
    """The initial state is not globally stable; the improving competitor is attached."""

    def __init__(self, message: str, competitor: State):
        super().__init__(message)
        self.competitor = competitor


class EnergyInequalityError(RuntimeError):
    """The discrete energy inequality failed beyond tolerance (solver bug)."""


@dataclass
class Trajectory:
    """States on the grid t_i = i T / k with per-step records (records[i-1] describes step i)."""

    states: list
    records: list
    law: MaterialLaw
    fe: FeSpace
    load: LoadProgram
    eps: float
    k: int
    delta_k: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def tau(self) -> float:
        return self.load.T / self.k

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    def energies(self) -> list[EnergyBreakdown]:
        return [total_energy(s, self.law, self.fe) for s in self.states]

    def energy_totals(self) -> np.ndarray:
        return np.array([b.total for b in self.energies()])

    def scale(self) -> float:
        """max(1, E(0), sup_t E(t)) for scale-relative tolerances."""
        return float(max(1.0, np.max(self.energy_totals())))

    @property
    def alpha(self) -> np.ndarray:
        return np.array([s.alpha for s in self.states])

    @property
    def is_viscous(self) -> bool:
        return self.eps > 0.0


def delta_k(load: LoadProgram, law: MaterialLaw, fe: FeSpace, k: int) -> float:
    """tau (gamma2/2) int_0^T |E wdot|_2^2 dt, evaluated exactly for the ramp table."""
    tau = load.T / k
    g2 = law.hooke.gamma2(fe.dim)
    sg = load.sym_G
    return tau * 0.5 * g2 * fe.area * float(sg @ sg) * load.rate_squared_integral(0.0, load.T)


def state_norm(s: State, fe: FeSpace) -> float:
    """|alpha|_H1 + |u|_H1 + |e|_2 + |p|_H1."""
    nu = 0.0 if fe.homogeneous else fe.norm(s.u, "H1")
    return fe.norm(s.alpha, "H1") + nu + fe.norm(s.e, "L2", elementwise=True) + fe.norm(s.p, "H1")


def _work_density(e: np.ndarray, law: MaterialLaw, fe: FeSpace, load: LoadProgram) -> float:
    """(C e, sym G)_2, the work rate per unit ramp rate."""
    return float(np.sum(fe.areas * (law.hooke.apply(e) @ load.sym_G)))


def make_initial_state(load: LoadProgram, law: MaterialLaw, fe: FeSpace,
                       cfg: SolverConfig = SolverConfig(), tol: float = 1e-8) -> State:
    """Sound, plastically undeformed elastic equilibrium at t = 0, certified globally stable
    by one incremental minimization against itself."""
    op = elastic_operator(fe, law, cfg)
    s = zero_state(fe, 0.0)
    uf, e = op.strain(fe.boundary_strain(load, 0.0), s.p)
    s.u = op.full_u(uf, load, 0.0)
    s.e = e
    E0 = total_energy(s, law, fe).total
    res = incremental_minimize(s, load, 0.0, 0.0, load.T, law, fe, cfg)
    c = res.state
    gap = E0 - res.objective
    moved = max(float(np.max(np.abs(c.alpha - s.alpha))), float(np.max(np.abs(c.p - s.p))))
    if gap > tol * max(1.0, abs(E0)) or moved > 1e-6:
        raise InitialStateError(
            f"initial state is not globally stable: competitor lowers the energy by {gap:.3e}", c
        )
    s.meta["certificate_gap"] = gap
    return s


def _step_record(i, prev: State, cur: State, eps, tau, law, fe, load, objective, sweeps, flagged):
    da = cur.alpha - prev.alpha
    dp = cur.p - prev.p
    dramp = float(load.ramp(cur.t) - load.ramp(prev.t))
    w_prev = _work_density(prev.e, law, fe, load)
    w_cur = _work_density(cur.e, law, fe, load)
    g = partial_alpha_vector(cur.alpha, cur.p, law, fe)
    visc = eps * float(da @ (fe.M_s @ da)) / tau
    dissip = plastic_potential(dp, law.constraint, fe)
    sig_prev = generalized_stress(prev.alpha, prev.e, prev.p, law, fe)
    sig_cur = generalized_stress(cur.alpha, cur.e, cur.p, law, fe)
    sg = load.sym_G
    return {
        "i": i,
        "t": cur.t,
        "dissipation": dissip,
        "viscous": visc,
        "work_left": w_prev * dramp,
        "work_trapezoid": 0.5 * (w_prev + w_cur) * dramp,
        "kt_residual": abs(float(g @ da) + visc) / tau,
        "hill_residual": abs(dissip - float(np.sum(sig_prev * dp))) / tau,
        "hill_residual_end": abs(dissip - float(np.sum(sig_cur * dp))) / tau,
        "d_alpha_l2": fe.norm(da, "L2"),
        "d_alpha_l1": fe.norm(da, "L1"),
        "d_alpha_h1": fe.norm(da, "H1"),
        "d_e_l2": fe.norm(cur.e - prev.e, "L2", elementwise=True),
        "d_p_l2": fe.norm(dp, "L2"),
        "d_p_h1": fe.norm(dp, "H1"),
        "d_p_l1": fe.norm(dp, "L1"),
        "d_strain_l2": abs(dramp) * float(np.sqrt(sg @ sg * fe.area)),
        "objective": objective,
        "sweeps": sweeps,
        "flagged": int(bool(flagged)),
    }


def _run(load, law, fe, k, eps, cfg, check_inequality: bool, tol_slack: float, progress=None):
    if k < 1:
        raise ValueError("k must be >= 1")
    if eps < 0.0:
        raise ValueError("eps must be >= 0")
    tau = load.T / k
    s0 = make_initial_state(load, law, fe, cfg)
    states = [s0]
    records = []
    dk = delta_k(load, law, fe, k)
    E0 = total_energy(s0, law, fe).total
    lhs_extra = 0.0
    rhs_work = 0.0
    for i in range(1, k + 1):
        prev = states[-1]
        res = incremental_minimize(prev, load, i * tau, eps, tau, law, fe, cfg)
        cur = res.state
        cur.t = i * tau
        rec = _step_record(i, prev, cur, eps, tau, law, fe, load, res.objective, res.iterations, res.flagged)
        states.append(cur)
        records.append(rec)
        lhs_extra += rec["dissipation"] + 0.5 * rec["viscous"]
        rhs_work += rec["work_left"]
        Ei = total_energy(cur, law, fe).total
        slack = E0 + rhs_work + dk - (Ei + lhs_extra)
        rec["slack"] = slack
        if check_inequality:
            scale = max(1.0, E0, Ei)
            if slack < -tol_slack * scale:
                raise EnergyInequalityError(f"discrete energy inequality violated at step {i}: slack {slack:.3e}")
        if progress is not None:
            progress(i, k, rec)
    return Trajectory(states, records, law, fe, load, eps, k, delta_k=dk)


def run_energetic(load: LoadProgram, law: MaterialLaw, fe: FeSpace, k: int,
                  cfg: SolverConfig = SolverConfig(), check_inequality: bool = True,
                  tol_slack: float = 1e-9, progress=None) -> Trajectory:
    """Energetic scheme (eps = 0) on the grid t_i = i T / k."""
    return _run(load, law, fe, k, 0.0, cfg, check_inequality, tol_slack, progress)


def run_viscous(load: LoadProgram, law: MaterialLaw, fe: FeSpace, k: int, eps: float,
                cfg: SolverConfig = SolverConfig(), check_inequality: bool = True,
                tol_slack: float = 1e-9, progress=None) -> Trajectory:
    """Viscous scheme with penalty eps/(2 tau)|alpha - alpha_prev|_2^2."""
    if not eps > 0.0:
        raise ValueError("the viscous scheme needs eps > 0")
    return _run(load, law, fe, k, eps, cfg, check_inequality, tol_slack, progress)


def discrete_energy_report(traj: Trajectory) -> dict:
    """Per-step LHS, RHS and slack of the discrete energy inequality (index 0 is the initial state)."""
    E = traj.energy_totals()
    diss = np.concatenate(([0.0], np.cumsum(traj.column("dissipation"))))
    visc = np.concatenate(([0.0], np.cumsum(traj.column("viscous"))))
    work = np.concatenate(([0.0], np.cumsum(traj.column("work_left"))))
    lhs = E + diss + 0.5 * visc
    rhs = E[0] + work + traj.delta_k
    return {"i": np.arange(len(E)), "t": traj.times, "lhs": lhs, "rhs": rhs, "slack": rhs - lhs}


def viscous_bounds(traj: Trajectory) -> dict:
    """Sum tau |alpha_dot|_2^2, sum tau |alpha_dot|_H1 and sum tau |alpha_dot|_H1^2."""
    tau = traj.tau
    l2 = traj.column("d_alpha_l2")
    h1 = traj.column("d_alpha_h1")
    return {
        "alpha_dot_l2_sq": float(np.sum(l2**2) / tau),
        "alpha_dot_h1": float(np.sum(h1)),
        "alpha_dot_h1_sq": float(np.sum(h1**2) / tau),
    }


def increment_ratios(traj: Trajectory) -> np.ndarray:
    """(|de|_2 + |dp|_H1) / (|dalpha|_2 + |E dw|_2) per step, nan where both vanish."""
    num = traj.column("d_e_l2") + traj.column("d_p_h1")
    den = traj.column("d_alpha_l2") + traj.column("d_strain_l2")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), np.nan)
