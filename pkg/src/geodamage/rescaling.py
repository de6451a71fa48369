"""Arc-length reparametrization of viscous trajectories and the BV checks.

The discrete arc length is s_i = s_{i-1} + tau + |dalpha_i|_H1 + |de_i|_2 + |dp_i|_H1.
States are read piecewise affinely in s between the original knots, so the
rescaled quintuple is 1-Lipschitz by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

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
from .evolution import Trajectory


class RescalingError(ValueError):
    """Degenerate or incompatible input for the rescaling tools."""


@dataclass
class RescaledTrajectory:
    traj: Trajectory
    s_knots: np.ndarray
    s_grid: np.ndarray
    t0: np.ndarray
    knot_increments: np.ndarray  # (k, 4): dt, |dalpha|_H1, |de|_2, |dp|_H1
    grid_slopes: np.ndarray  # (n-1, 4) per grid interval, divided by ds
    meta: dict = field(default_factory=dict)

    @property
    def S(self) -> float:
        return float(self.s_knots[-1])

    @property
    def knot_slopes(self) -> np.ndarray:
        """Total slope (dt + |dalpha|_H1 + |de|_2 + |dp|_H1) / ds per original step."""
        ds = np.diff(self.s_knots)
        return self.knot_increments.sum(axis=1) / ds

    @property
    def t0_rate(self) -> np.ndarray:
        return np.diff(self.t0) / np.diff(self.s_grid)

    def _locate(self, s: float):
        s = float(np.clip(s, 0.0, self.S))
        j = int(np.searchsorted(self.s_knots, s, side="right"))
        j = min(max(j, 1), len(self.s_knots) - 1)
        a, b = self.s_knots[j - 1], self.s_knots[j]
        theta = 0.0 if b <= a else (s - a) / (b - a)
        return j, theta

    def state_at(self, s: float) -> State:
        """Piecewise-affine state at arc length s (t0 included as State.t)."""
        j, th = self._locate(s)
        x0, x1 = self.traj.states[j - 1], self.traj.states[j]
        mix = lambda a, b: (1.0 - th) * a + th * b
        return State(
            t=mix(x0.t, x1.t),
            alpha=mix(x0.alpha, x1.alpha),
            u=mix(x0.u, x1.u),
            e=mix(x0.e, x1.e),
            p=mix(x0.p, x1.p),
        )

    def grid_states(self) -> list[State]:
        if "grid_states" not in self.meta:
            self.meta["grid_states"] = [self.state_at(s) for s in self.s_grid]
        return self.meta["grid_states"]


def arclength_parametrize(traj: Trajectory, n_grid: int | None = None) -> RescaledTrajectory:
    """Discrete arc length on the original knots and a uniform s-grid of ``n_grid`` points."""
    if len(traj.states) < 2:
        raise RescalingError("trajectory has no steps")
    fe = traj.fe
    inc = np.column_stack([
        np.diff(traj.times),
        traj.column("d_alpha_h1"),
        traj.column("d_e_l2"),
        traj.column("d_p_h1"),
    ])
    ds = inc.sum(axis=1)
    if np.any(ds <= 0.0):
        raise RescalingError("zero-length step in the trajectory")
    s_knots = np.concatenate(([0.0], np.cumsum(ds)))
    S = float(s_knots[-1])
    n = 4 * traj.k + 1 if n_grid is None else int(n_grid)
    if n < 2:
        raise RescalingError("the s-grid needs at least two points")
    s_grid = np.linspace(0.0, S, n)
    t0 = np.interp(s_grid, s_knots, traj.times)
    t0[0], t0[-1] = traj.times[0], traj.times[-1]
    t0 = np.maximum.accumulate(t0)
    rt = RescaledTrajectory(traj, s_knots, s_grid, t0, inc, np.zeros((n - 1, 4)))
    states = rt.grid_states()
    slopes = np.empty((n - 1, 4))
    h = np.diff(s_grid)
    for j in range(n - 1):
        a, b = states[j], states[j + 1]
        slopes[j] = (
            b.t - a.t,
            fe.norm(b.alpha - a.alpha, "H1"),
            fe.norm(b.e - a.e, "L2", elementwise=True),
            fe.norm(b.p - a.p, "H1"),
        )
        slopes[j] /= h[j]
    rt.grid_slopes = slopes
    return rt


def _runs(mask: np.ndarray, min_len: int):
    out = []
    j = 0
    n = mask.size
    while j < n:
        if mask[j]:
            k = j
            while k < n and mask[k]:
                k += 1
            if k - j >= min_len:
                out.append((j, k))
            j = k
        else:
            j += 1
    return out


def detect_plateaus(rt: RescaledTrajectory, slope_threshold: float | None = None,
                    min_intervals: int = 3) -> list[tuple[float, float]]:
    """Maximal s-intervals where the discrete rate of t0 stays below the threshold.

    The default threshold is 1e-6 T / S; runs shorter than ``min_intervals``
    grid intervals are dropped as noise.
    """
    T = float(rt.traj.load.T)
    thr = 1e-6 * T / rt.S if slope_threshold is None else float(slope_threshold)
    mask = rt.t0_rate < thr
    return [(float(rt.s_grid[a]), float(rt.s_grid[b])) for a, b in _runs(mask, min_intervals)]


def plateau_mask(rt: RescaledTrajectory, plateaus) -> np.ndarray:
    """Grid points lying in the closure of a plateau interval."""
    m = np.zeros(rt.s_grid.size, dtype=bool)
    for a, b in plateaus:
        m |= (rt.s_grid >= a - 1e-14 * rt.S) & (rt.s_grid <= b + 1e-14 * rt.S)
    return m


@dataclass
class BVReport:
    residuals: dict
    plateaus: list
    psi: np.ndarray
    a0_in_u0: bool
    ev4_slack: np.ndarray
    scale: float

    def rows(self):
        return [(k, float(v)) for k, v in self.residuals.items()]


def check_bv_conditions(rt: RescaledTrajectory, tol: float = 1e-6, plateaus=None,
                        psi_tol: float | None = None, n_random: int = 5) -> BVReport:
    """Evaluate the BV conditions on the s-grid and return their residual maxima."""
    traj = rt.traj
    law, fe, load = traj.law, traj.fe, traj.load
    states = rt.grid_states()
    scale = traj.scale()
    if plateaus is None:
        plateaus = detect_plateaus(rt)
    in_u0 = plateau_mask(rt, plateaus)
    psi = np.array([psi_slope(s, law, fe) for s in states])
    energies = np.array([total_energy(s, law, fe).total for s in states])
    sg = load.sym_G
    h = np.diff(rt.s_grid)

    # (ev0) monotone t0 and alpha
    alpha = np.array([s.alpha for s in states])
    ev0 = max(0.0, -float(np.min(np.diff(rt.t0))), float(np.max(np.diff(alpha, axis=0))) if len(states) > 1 else 0.0)
    # (ev1) equilibrium; (ev2) stress constraint
    ev1 = max(equilibrium_residual(s, law, fe) for s in states)
    ev2 = max(stress_constraint_residual(s, law, fe, n_random=n_random) for s in states)
    # (ev3) slope outside the plateaus
    outside = ~in_u0
    ev3 = float(np.max(psi[outside])) if np.any(outside) else 0.0

    # (ev4) rescaled energy balance, trapezoid in s
    dalpha_l2 = np.array([fe.norm(states[j + 1].alpha - states[j].alpha, "L2") for j in range(len(h))])
    psi_term = 0.5 * (psi[:-1] + psi[1:]) * dalpha_l2
    dissip = np.array([plastic_potential(states[j + 1].p - states[j].p, law.constraint, fe) for j in range(len(h))])
    wd = np.array([float(np.sum(fe.areas * (law.hooke.apply(s.e) @ sg))) for s in states])
    dramp = np.diff(load.ramp(rt.t0))
    work = 0.5 * (wd[:-1] + wd[1:]) * dramp
    lhs = energies[1:] + np.cumsum(dissip) + np.cumsum(psi_term)
    rhs = energies[0] + np.cumsum(work)
    ev4_slack = np.concatenate(([0.0], rhs - lhs))
    ev4 = float(np.max(np.abs(ev4_slack)))

    # (ev4') generalized Kuhn-Tucker and Hill, per interval
    kt = np.zeros(len(h))
    hill = np.zeros(len(h))
    for j in range(len(h)):
        a, b = states[j], states[j + 1]
        mid = State(0.5 * (a.t + b.t), 0.5 * (a.alpha + b.alpha), 0.5 * (a.u + b.u), 0.5 * (a.e + b.e), 0.5 * (a.p + b.p))
        g = partial_alpha_vector(mid.alpha, mid.p, law, fe)
        da = b.alpha - a.alpha
        kt[j] = abs(float(g @ da) + psi_term[j]) / h[j]
        sig = generalized_stress(mid.alpha, mid.e, mid.p, law, fe)
        hill[j] = abs(dissip[j] - float(np.sum(sig * (b.p - a.p)))) / h[j]

    ptol = tol * scale if psi_tol is None else psi_tol
    a0 = psi > ptol
    a0_in_u0 = bool(np.all(in_u0[a0]))
    residuals = {
        "ev0_monotonicity": ev0,
        "ev1_equilibrium": ev1,
        "ev2_stress": max(ev2, 0.0),
        "ev3_psi_outside_plateaus": ev3,
        "ev4_balance": ev4,
        "ev4pp_slack_min": float(np.min(ev4_slack)),
        "ev4p_kuhn_tucker": float(np.max(kt)) if kt.size else 0.0,
        "ev4p_hill": float(np.max(hill)) if hill.size else 0.0,
        "a0_outside_u0_points": float(np.sum(a0 & ~in_u0)),
        "plateau_count": float(len(plateaus)),
    }
    return BVReport(residuals, plateaus, psi, a0_in_u0, ev4_slack, scale)


def rescaled_rows(rt: RescaledTrajectory, report: BVReport | None = None):
    """Rows for rescaled.csv: s, t0, slopes of the following interval, psi, plateau flag."""
    plate = plateau_mask(rt, report.plateaus if report is not None else detect_plateaus(rt))
    psi = report.psi if report is not None else np.full(rt.s_grid.size, np.nan)
    rows = []
    n = rt.s_grid.size
    for j in range(n):
        sl = rt.grid_slopes[j] if j < n - 1 else np.full(4, np.nan)
        rows.append([rt.s_grid[j], rt.t0[j], *sl, psi[j], int(plate[j])])
    return rows


def eps_limit_compare(rts: list[RescaledTrajectory], align: str = "affine", n_points: int = 401):
    """Distances sup_s (|dalpha|_2 + |dp|_2 + |de|_2 + |dt0|) between consecutive trajectories.

    ``align='affine'`` maps each [0, S_eps] onto [0, 1]; ``align='extend'``
    compares on [0, max S] with every trajectory held constant past its end.
    """
    if len(rts) < 2:
        raise RescalingError("need at least two rescaled trajectories")
    ref = rts[0].traj
    for rt in rts[1:]:
        tr = rt.traj
        if tr.fe.n_nodes != ref.fe.n_nodes or tr.fe.n_elems != ref.fe.n_elems or not np.array_equal(tr.load.G, ref.load.G) \
                or tr.load.T != ref.load.T:
            raise RescalingError("trajectories differ in mesh or load")
    if align not in ("affine", "extend"):
        raise RescalingError(f"unknown alignment {align!r}")
    fe = ref.fe
    sig = np.linspace(0.0, 1.0, n_points)
    Smax = max(rt.S for rt in rts)
    rows = []
    for a, b in zip(rts[:-1], rts[1:]):
        dist = 0.0
        for x in sig:
            sa = x * a.S if align == "affine" else x * Smax
            sb = x * b.S if align == "affine" else x * Smax
            A, B = a.state_at(sa), b.state_at(sb)
            d = (fe.norm(A.alpha - B.alpha, "L2") + fe.norm(A.p - B.p, "L2")
                 + fe.norm(A.e - B.e, "L2", elementwise=True) + abs(A.t - B.t))
            dist = max(dist, d)
        rows.append({"eps_a": a.traj.eps, "eps_b": b.traj.eps, "S_a": a.S, "S_b": b.S, "distance": dist})
    return rows
