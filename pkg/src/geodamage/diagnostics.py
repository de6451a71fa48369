"""Trajectory-level checks of the optimality, balance and regularity conditions.

Every check returns a :class:`CheckReport`.  Tolerances are relative to
``scale = max(1, E(0), sup_t E(t))`` unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import (
    State,
    equilibrium_residual,
    generalized_stress,
    partial_alpha_vector,
    plastic_potential,
    psi_slope,
    stress_constraint_residual,
    total_energy,
)
from .evolution import Trajectory, discrete_energy_report
from .solver import SolverConfig, elastic_operator


@dataclass(frozen=True)
class CheckReport:
    check_id: str
    residual: float
    tolerance: float
    passed: bool
    location: str = ""
    provenance: str = ""

    @classmethod
    def make(cls, check_id, residual, tolerance, location="", provenance=""):
        residual = float(residual)
        return cls(check_id, residual, float(tolerance), bool(residual <= tolerance), location, provenance)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.check_id}: residual {self.residual:.3e} (tol {self.tolerance:.1e}) {self.location}"


def _argmax_loc(values, times, label="t") -> str:
    if len(values) == 0:
        return ""
    j = int(np.nanargmax(values))
    return f"{label}={times[j]:.6g}"


# ---------------------------------------------------------------------------
# Balance and Kuhn-Tucker checks
# ---------------------------------------------------------------------------


def energy_balance_residuals(traj: Trajectory) -> np.ndarray:
    """|E(t) + sum H(dp) + eps int |alpha_dot|^2 - E(0) - int (Ce, E wdot)| with trapezoid work."""
    E = traj.energy_totals()
    diss = np.concatenate(([0.0], np.cumsum(traj.column("dissipation"))))
    visc = np.concatenate(([0.0], np.cumsum(traj.column("viscous"))))
    work = np.concatenate(([0.0], np.cumsum(traj.column("work_trapezoid"))))
    return np.abs(E + diss + visc - E[0] - work)


def check_energy_balance(traj: Trajectory, tol: float | None = None) -> CheckReport:
    """Energy-dissipation balance; expected to vanish at first order in tau."""
    r = energy_balance_residuals(traj)
    tol = traj.tau * traj.scale() if tol is None else tol
    return CheckReport.make("energy_balance", np.max(r), tol, _argmax_loc(r, traj.times),
                            "energy-dissipation balance, trapezoid work")


def check_energy_inequality(traj: Trajectory, tol: float = 1e-9) -> CheckReport:
    slack = discrete_energy_report(traj)["slack"]
    neg = np.maximum(-slack, 0.0)
    return CheckReport.make("energy_inequality", np.max(neg), tol * traj.scale(), _argmax_loc(neg, traj.times),
                            "discrete energy inequality, explicit work plus delta_k")


def check_kuhn_tucker(traj: Trajectory, tol: float = 1e-8) -> CheckReport:
    r = traj.column("kt_residual")
    return CheckReport.make("kuhn_tucker", np.max(r, initial=0.0), tol * traj.scale(),
                            _argmax_loc(r, traj.times[1:]), "|d_alpha E[alpha_dot] + eps |alpha_dot|^2|")


def check_hill(traj: Trajectory, tol: float | None = None) -> CheckReport:
    """Hill residual |H(p_dot) - sigma . p_dot| with sigma at the start of each step (O(tau))."""
    r = traj.column("hill_residual")
    tol = 10.0 * traj.tau * traj.scale() if tol is None else tol
    return CheckReport.make("hill", np.max(r, initial=0.0), tol, _argmax_loc(r, traj.times[1:]),
                            "maximum plastic work, explicit stress")


# ---------------------------------------------------------------------------
# Pointwise-in-time checks
# ---------------------------------------------------------------------------


def irreversibility(traj: Trajectory) -> CheckReport:
    """alpha nonincreasing nodewise and inside [0, 1]; zero tolerance."""
    a = traj.alpha
    r = max(0.0, float(np.max(np.diff(a, axis=0), initial=0.0)), float(-np.min(a)), float(np.max(a) - 1.0))
    loc = ""
    if r > 0.0 and len(a) > 1:
        d = np.diff(a, axis=0)
        i, n = np.unravel_index(int(np.argmax(d)), d.shape)
        loc = f"step={i + 1} node={n}"
    return CheckReport.make("irreversibility", r, 0.0, loc, "alpha nonincreasing, 0 <= alpha <= 1")


def rhvar(traj: Trajectory, tol: float = 1e-10) -> CheckReport:
    """r_eff sum |dp|_1 <= sum H(dp)."""
    lhs = traj.law.constraint.r_eff * float(np.sum(traj.column("d_p_l1")))
    rhs = float(np.sum(traj.column("dissipation")))
    return CheckReport.make("rH_variation", max(0.0, lhs - rhs), tol * traj.scale(),
                            f"lhs={lhs:.6g} rhs={rhs:.6g}", "r_eff |dp|_1 <= H-dissipation")


def check_stress_constraint(traj: Trajectory, tol: float = 1e-8, n_random: int = 20) -> CheckReport:
    r = np.array([stress_constraint_residual(s, traj.law, traj.fe, n_random=n_random, seed=i)
                  for i, s in enumerate(traj.states)])
    return CheckReport.make("stress_constraint", max(0.0, float(np.max(r))), tol * traj.scale(),
                            _argmax_loc(r, traj.times), "sigma in K over the test-field family")


def check_equilibrium(traj: Trajectory, tol: float = 1e-8) -> CheckReport:
    r = np.array([equilibrium_residual(s, traj.law, traj.fe) for s in traj.states])
    return CheckReport.make("equilibrium", float(np.max(r)), tol * traj.scale(), _argmax_loc(r, traj.times),
                            "div(C e) = 0 in the interior")


def check_flags(traj: Trajectory) -> CheckReport:
    f = traj.column("flagged")
    return CheckReport.make("solver_flags", float(np.sum(f)), 0.0, "", "steps flagged by the incremental solver")


# ---------------------------------------------------------------------------
# Global stability
# ---------------------------------------------------------------------------


def _competitors(s: State, traj: Trajectory, rng, n_random: int, fix_alpha: bool):
    """Yield (alpha, e, p) competitors for the global stability test at state s."""
    law, fe, load = traj.law, traj.fe, traj.load
    op = elastic_operator(fe, law, SolverConfig())
    e_lift = fe.boundary_strain(load, s.t)

    def relaxed(q):
        return op.strain(e_lift, q)[1]

    # (i) elastic relaxations: keep p, or undo the plastic strain entirely
    yield s.alpha, relaxed(s.p), s.p
    q0 = np.zeros_like(s.p)
    yield s.alpha, relaxed(q0), q0
    # (ii) uniform extra damage
    if not fix_alpha:
        for c in (0.9, 0.5, 0.0):
            yield c * s.alpha, s.e, s.p
    # (iii) plastic perturbations along the outward stress normal, or random
    sig = generalized_stress(s.alpha, s.e, s.p, law, fe)
    m = fe.lumped[:, None]
    nrm = sig / m - law.constraint.project(sig / m)
    dirs = [nrm] if np.max(np.abs(nrm)) > 0.0 else []
    dirs.append(rng.normal(size=s.p.shape))
    for d in dirs:
        d = d / max(fe.norm(d, "L2"), 1e-300)
        for delta in (1e-3, 1e-2, 1e-1):
            q = s.p + delta * d
            yield s.alpha, relaxed(q), q
    # (iv) random admissible states
    for _ in range(n_random):
        beta = s.alpha if fix_alpha else s.alpha * rng.uniform(0.0, 1.0, size=s.alpha.shape)
        q = s.p + 0.1 * rng.normal(size=s.p.shape)
        yield beta, relaxed(q), q


def stability_violation(s: State, traj: Trajectory, n_random: int = 5, seed: int = 0,
                        fix_alpha: bool = False) -> float:
    """max over competitors of E(s) - [E(competitor) + H(q - p)]."""
    law, fe = traj.law, traj.fe
    E = total_energy(s, law, fe).total
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for beta, eta, q in _competitors(s, traj, rng, n_random, fix_alpha):
        h = plastic_potential(q - s.p, law.constraint, fe)
        if not np.isfinite(h):
            continue
        Ec = total_energy(State(s.t, beta, s.u, eta, q), law, fe).total
        worst = max(worst, E - (Ec + h))
    return float(worst)


def check_global_stability(traj: Trajectory, n_competitors: int = 5, tol: float = 1e-8,
                           n_times: int = 11, seed: int = 0, fix_alpha: bool = False) -> CheckReport:
    idx = np.unique(np.linspace(0, len(traj.states) - 1, min(n_times, len(traj.states))).astype(int))
    v = np.array([stability_violation(traj.states[i], traj, n_competitors, seed + i, fix_alpha) for i in idx])
    cid = "variational_st3" if fix_alpha else "global_stability"
    return CheckReport.make(cid, max(0.0, float(np.max(v))), tol * traj.scale(),
                            _argmax_loc(v, traj.times[idx]), "energy below every sampled competitor")


# ---------------------------------------------------------------------------
# Continuity estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuityResult:
    max_ratio: float
    max_ratio_u: float
    n_pairs: int
    zero_den_max_numerator: float
    flagged_pairs: int


def _pairs(n: int, max_pairs: int, seed: int):
    total = n * (n - 1) // 2
    if total <= max_pairs:
        i, j = np.triu_indices(n, k=1)
        return i, j
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=4 * max_pairs)
    j = rng.integers(0, n, size=4 * max_pairs)
    keep = i < j
    pairs = np.unique(np.stack([i[keep], j[keep]], axis=1), axis=0)[:max_pairs]
    return pairs[:, 0], pairs[:, 1]


def continuity_ratio(traj: Trajectory, max_pairs: int = 10_000, seed: int = 0,
                     zero_tol: float = 1e-10) -> ContinuityResult:
    """R(t1, t2) = (|dalpha|_H1 + |de|_2 + |dp|_H1) / (|dalpha|_1 + int |E wdot|_2) and the u-variant."""
    fe, load = traj.fe, traj.load
    states = traj.states
    sg = load.sym_G
    strain_rate = float(np.sqrt(sg @ sg * fe.area))
    i, j = _pairs(len(states), max_pairs, seed)
    best = best_u = 0.0
    zmax = 0.0
    flagged = 0
    for a, b in zip(i, j):
        A, B = states[a], states[b]
        num = fe.norm(B.alpha - A.alpha, "H1") + fe.norm(B.e - A.e, "L2", elementwise=True) + fe.norm(B.p - A.p, "H1")
        num_u = 0.0 if fe.homogeneous else fe.norm(B.u - A.u, "H1")
        den = fe.norm(B.alpha - A.alpha, "L1") + strain_rate * load.rate_abs_integral(A.t, B.t)
        if den <= 0.0:
            zmax = max(zmax, num, num_u)
            flagged += int(max(num, num_u) > zero_tol)
            continue
        best = max(best, num / den)
        best_u = max(best_u, num_u / den)
    return ContinuityResult(best, best_u, len(i), zmax, flagged)


def check_continuity(traj: Trajectory, bound: float = np.inf, max_pairs: int = 10_000) -> CheckReport:
    r = continuity_ratio(traj, max_pairs)
    bad = r.flagged_pairs > 0 or not np.isfinite(r.max_ratio)
    resid = np.inf if bad else r.max_ratio
    return CheckReport.make("continuity_ratio", resid, bound,
                            f"pairs={r.n_pairs} zero_den_flagged={r.flagged_pairs}", "bounded increment ratio")


# ---------------------------------------------------------------------------
# Variational inequalities
# ---------------------------------------------------------------------------


def check_variational_inequalities(traj: Trajectory, tol: float = 1e-8) -> list[CheckReport]:
    """Damage slope, stress constraint and plastic stability with alpha frozen.

    The damage-slope inequality only holds for the energetic scheme; on viscous
    trajectories it is reported with an infinite tolerance (the viscous
    Kuhn-Tucker check replaces it).
    """
    law, fe = traj.law, traj.fe
    scale = traj.scale()
    psi = np.array([psi_slope(s, law, fe) for s in traj.states])
    if traj.is_viscous:
        st1 = CheckReport.make("variational_st1[viscous]", float(np.max(psi)), np.inf, _argmax_loc(psi, traj.times),
                               "not applicable to viscous trajectories")
    else:
        st1 = CheckReport.make("variational_st1", float(np.max(psi)), tol * scale, _argmax_loc(psi, traj.times),
                               "Psi = 0 (no energy decrease by further damage)")
    st2 = check_stress_constraint(traj, tol)
    st2 = CheckReport("variational_st2", st2.residual, st2.tolerance, st2.passed, st2.location, st2.provenance)
    st3 = check_global_stability(traj, tol=tol, fix_alpha=True)
    return [st1, st2, st3]


def alpha_gradient_residuals(traj: Trajectory) -> np.ndarray:
    """Psi at every stored state."""
    return np.array([psi_slope(s, traj.law, traj.fe) for s in traj.states])


def run_all_checks(traj: Trajectory, tol: float = 1e-8, n_competitors: int = 5) -> list[CheckReport]:
    """Full suite used by the command-line ``check`` subcommand."""
    reports = [
        irreversibility(traj),
        check_energy_inequality(traj),
        check_energy_balance(traj),
        check_equilibrium(traj, tol),
        check_stress_constraint(traj, tol),
        rhvar(traj),
        check_continuity(traj),
        check_flags(traj),
    ]
    if traj.is_viscous:
        reports += [check_kuhn_tucker(traj), check_hill(traj)]
    else:
        reports.append(check_global_stability(traj, n_competitors, tol))
    reports += check_variational_inequalities(traj, tol)
    return reports
