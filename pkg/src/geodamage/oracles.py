"""Brute-force reference solvers, independent of the incremental solver.

Both oracles only evaluate objective values on grids (through
``kernels.grid_scan``); they never use gradients, prox formulas or the
alternating scheme.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .energy import State
from .fem import FeSpace, homogeneous_space
from .load import LoadProgram
from .tensor import ConstraintSet, MaterialLaw


def _zoom_scan(center, half_width, C, eps, bval, lam_h, p_prev, K: ConstraintSet,
               npts: int = 21, shrink: float = 2.0, min_h: float = 1e-10):
    """Coarse-to-fine grid minimization over R^3 of the grid_scan objective.

    A pattern search on nested cubic grids: the grid is recentered on its best
    point until the center itself is best, then the spacing shrinks by
    ``shrink``.  Stops once the spacing drops below ``min_h * half_width``.
    """
    center = np.asarray(center, dtype=float).copy()
    C = np.ascontiguousarray(C, dtype=float)
    eps = np.ascontiguousarray(eps, dtype=float)
    p_prev = np.ascontiguousarray(p_prev, dtype=float)
    h = 2.0 * half_width / (npts - 1)
    best = np.inf
    while h > min_h * max(1.0, half_width):
        for _ in range(100):
            val, p = kernels.grid_scan(center, h, npts, C, eps, float(bval), float(lam_h), p_prev,
                                       K.code, *K.params, K.dim)
            if not val < best:
                break
            best, center = val, p
        h /= shrink
    return best, center


def _zoom_box(f, lo, hi, npts: int = 21, shrink: float = 2.0, min_rel: float = 1e-11):
    """Coarse-to-fine grid minimization of a vectorized ``f`` over the box [lo, hi].

    Same pattern search as :func:`_zoom_scan`, with grid points clipped to the box.
    """
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    width = hi - lo
    center = 0.5 * (lo + hi)
    h = width / (npts - 1)
    off = np.arange(npts) - 0.5 * (npts - 1)
    best = np.inf
    while np.max(h / np.maximum(width, 1e-300)) > min_rel:
        for _ in range(100):
            axes = [np.clip(center[d] + h[d] * off, lo[d], hi[d]) for d in range(lo.size)]
            pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
            vals = f(pts)
            k = int(np.argmin(vals))
            if not vals[k] < best:
                break
            best, center = float(vals[k]), pts[k].copy()
        h = h / shrink
    return best, center


def prox_grid_oracle(xi, lam: float, K: ConstraintSet, half_width: float | None = None):
    """argmin_q 1/2 |q - xi|^2 + lam H(q) by coarse-to-fine grid search (3 Voigt components).

    For the Drucker-Prager cone, where H is finite only on a cone, the search
    runs in cone coordinates (axial coordinate, radial fraction, angle) so the
    feasible set is a box; a Cartesian pattern search stalls on the curved
    cone surface.  Either way only objective values are used.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (3,):
        raise ValueError("the grid oracle works with 2D tensors (3 Voigt components)")
    if K.kind == "ball":
        hw = 1.5 * float(np.linalg.norm(xi)) + 1.0 if half_width is None else half_width
        val, q = _zoom_scan(np.zeros(3), hw, np.eye(3), xi, 0.0, lam, np.zeros(3), K)
        return q, val
    axis = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
    d1 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)
    d2 = np.array([0.0, 0.0, 1.0])
    slope = np.sqrt(2.0) / K.tau  # |dev q| <= slope * (axial coordinate) on the cone

    def to_q(z):
        x, rho, th = z[:, 0], z[:, 1], z[:, 2]
        r = rho * slope * x
        return x[:, None] * axis + (r * np.cos(th))[:, None] * d1 + (r * np.sin(th))[:, None] * d2

    def f(z):
        q = to_q(z)
        return 0.5 * np.sum((q - xi) ** 2, axis=1) + lam * K.support(q)

    # prox outputs satisfy |q| <= |xi| because 0 lies in the constraint set
    X = float(np.linalg.norm(xi)) if half_width is None else half_width
    val, z = _zoom_box(f, [0.0, 0.0, -np.pi], [X, 1.0, np.pi])
    return to_q(z[None, :])[0], val


def brute_force_oracle_homogeneous(prev: State, load: LoadProgram, t: float, eps: float, tau: float,
                                   law: MaterialLaw, fe: FeSpace | None = None,
                                   n_alpha: int = 200, tol: float = 1e-6):
    """Global grid minimization of the incremental objective at one material point.

    Returns ``(state, objective)``.  The alpha search is a ``n_alpha``-point
    grid on [0, alpha_prev] followed by local grid refinement around the
    three best points until the objective changes by less than ``tol``
    (relative); for each alpha the plastic strain is found by
    coarse-to-fine search over its three components.
    """
    fe = homogeneous_space() if fe is None else fe
    if not fe.homogeneous:
        raise ValueError("the brute-force oracle needs a homogeneous space")
    if law.dim != 2:
        raise ValueError("the brute-force oracle works in two dimensions")
    area = fe.area
    C = law.hooke.matrix(2)
    strain = float(load.ramp(t)) * load.sym_G
    p_prev = prev.p[0].astype(float)
    a_prev = float(prev.alpha[0])
    K = law.constraint

    # Bound on |p - p_prev|: the objective at p = p_prev bounds r_eff |p - p_prev|
    # plus nonnegative terms, and the quadratic part bounds |eps - p|.
    r0 = strain - p_prev
    f0 = 0.5 * r0 @ C @ r0 + (law.hardening.b_floor + law.hardening.b_max) * (p_prev @ p_prev)
    hw = max(2.0 * np.linalg.norm(r0) + 2.0 * np.sqrt(2.0 * f0 / law.hooke.gamma1),
             f0 / max(K.r_eff, 1e-12)) + 1e-3
    hw = min(hw, 4.0 * (np.linalg.norm(strain) + np.linalg.norm(p_prev)) + 1.0)

    cache: dict[float, tuple[float, np.ndarray]] = {}

    def phi(a: float):
        if a in cache:
            return cache[a]
        bval = float(law.hardening.b(a))
        val, p = _zoom_scan(p_prev, hw, C, strain, bval, 1.0, p_prev, K)
        val += float(law.damage.d(a))
        if eps > 0.0:
            val += 0.5 * eps / tau * (a - a_prev) ** 2
        cache[a] = (val, p)
        return cache[a]

    grid = np.linspace(0.0, a_prev, n_alpha) if a_prev > 0.0 else np.zeros(1)
    vals = np.array([phi(float(a))[0] for a in grid])
    order = np.argsort(vals)[:3]
    best_a, best_v = float(grid[order[0]]), float(vals[order[0]])
    step = grid[1] - grid[0] if grid.size > 1 else 0.0
    for j in order:
        a_c, v_c, h = float(grid[j]), float(vals[j]), step
        while h > 1e-10:
            cand = np.clip(a_c + h * np.arange(-5, 6) / 5.0, 0.0, a_prev)
            cv = np.array([phi(float(a))[0] for a in cand])
            k = int(np.argmin(cv))
            improved = v_c - cv[k]
            a_c, v_c = float(cand[k]), float(cv[k])
            h /= 5.0
            if 0.0 <= improved <= tol * 1e-4 * max(1.0, abs(v_c)) and h < 1e-6:
                break
        if v_c < best_v:
            best_a, best_v = a_c, v_c
    _, p = phi(best_a)
    state = State(
        t=t,
        alpha=np.array([best_a]),
        u=np.zeros((0, 2)),
        e=(strain - p)[None, :],
        p=p[None, :].copy(),
        meta={"oracle": True},
    )
    return state, area * best_v
