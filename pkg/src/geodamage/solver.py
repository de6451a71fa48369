"""One incremental minimization step by alternating exact partial minimization.

Incremental objective (eps = 0 is the energetic scheme)::

    F(beta, eta, q) = E(beta, eta, q) + Hpot(q - p_prev) + eps/(2 tau) |beta - alpha_prev|_2^2

over 0 <= beta <= alpha_prev and (v, eta, q) admissible for the current
boundary datum.

Elastoplastic substep (alpha fixed)
    u is eliminated exactly (the elastic problem does not depend on alpha),
    which leaves a convex quadratic in p plus the nodewise plastic potential.
    It is solved on the fixed-point map of proximal gradient,
    G(p) = p - p_prev - prox_{tH}(p - t M_L^{-1} grad f(p) - p_prev),
    by semismooth Newton steps with proximal-gradient (FISTA) fallback.
Damage substep (e, p fixed)
    a bound-constrained convex QP, solved by projected Newton with
    active-set identification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .energy import (
    State,
    alpha_hessian,
    energy_parts,
    hardening_mass,
    partial_alpha_vector,
    plastic_potential,
)
from .fem import FeSpace
from .load import LoadProgram
from .tensor import MaterialLaw

DENSE_LIMIT = 6000


class SolverError(RuntimeError):
    """Raised when a substep does not converge; carries the last residual."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    tol_energy_stagnation: float = 1e-10
    tol_pd: float = 1e-9
    max_outer: int = 200
    max_inner: int = 5000
    linear_solver: str = "direct_sparse"
    cg_tol: float = 1e-12
    n_starts: int = 3
    seed: int = 0

    def __post_init__(self):
        if not (self.tol_energy_stagnation > 0 and self.tol_pd > 0 and self.cg_tol > 0):
            raise ValueError("solver tolerances must be > 0")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.linear_solver not in ("direct_sparse", "conjugate_gradient"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        if not 1 <= self.n_starts <= 3:
            raise ValueError("n_starts must be 1, 2 or 3")


# ---------------------------------------------------------------------------
# Elastic operator
# ---------------------------------------------------------------------------


class ElasticOperator:
    """Exact elimination of u for a given p.

    e(p) = r + B_f u_f with r = e_lift - P p and u_f = -A_ff^{-1} B_f^T C r,
    where e_lift is the strain of the boundary values alone.
    """

    def __init__(self, fe: FeSpace, law: MaterialLaw, cfg: SolverConfig):
        self.fe = fe
        m = fe.m
        C = law.hooke.matrix(fe.dim)
        self.Chat = sp.kron(sp.diags(fe.areas), sp.csr_matrix(C), format="csr")
        self.cfg = cfg
        nf = len(fe.free_dofs)
        self.nf = nf
        if nf:
            self.Bf = fe.Bsym[:, fe.free_dofs].tocsc()
            self.BfC = (self.Bf.T @ self.Chat).tocsr()
            self.Aff = (self.BfC @ self.Bf).tocsc()
            self.Aff = 0.5 * (self.Aff + self.Aff.T)
            if cfg.linear_solver == "direct_sparse":
                self._lu = spla.splu(self.Aff.tocsc())
            else:
                self._lu = None
        self._S = None
        self._spectra = None
        self.np = fe.n_nodes * m

    def solve_free(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(rhs)
        if rhs.ndim == 2:
            return np.column_stack([self.solve_free(rhs[:, j]) for j in range(rhs.shape[1])])
        x, info = spla.cg(self.Aff, rhs, rtol=self.cfg.cg_tol, atol=0.0, maxiter=10 * self.nf)
        if info != 0:
            raise SolverError("conjugate gradient did not converge in the elastic solve")
        return x

    def strain(self, e_lift: np.ndarray, p: np.ndarray):
        """Return (u_free, e) for plastic strain p (nv, m)."""
        fe = self.fe
        r = (e_lift - fe.average(p)).ravel()
        if self.nf == 0:
            return np.zeros(0), r.reshape(fe.n_elems, fe.m)
        uf = -self.solve_free(self.BfC @ r)
        e = r + self.Bf @ uf
        return uf, e.reshape(fe.n_elems, fe.m)

    def full_u(self, uf: np.ndarray, load: LoadProgram, t: float) -> np.ndarray:
        fe = self.fe
        if fe.homogeneous:
            return np.zeros((0, 2))
        u = fe.dirichlet_lift(load, t).ravel().copy()
        u[fe.free_dofs] = uf
        return u.reshape(fe.n_nodes, 2)

    @property
    def schur(self) -> np.ndarray:
        """Dense Hessian in p of the elastic energy after eliminating u."""
        if self._S is None:
            fe = self.fe
            if self.np > DENSE_LIMIT:
                raise SolverError(f"tensor space too large for the dense Schur complement ({self.np} dofs)")
            P3 = fe.P3
            CP = (self.Chat @ P3).tocsc()
            S = (P3.T @ CP).toarray()
            if self.nf:
                Y = (self.BfC @ P3).toarray()
                X = self.solve_free(Y)
                S -= Y.T @ X
            self._S = 0.5 * (S + S.T)
        return self._S

    def dual_stress(self, e: np.ndarray) -> np.ndarray:
        """P^T (|K| C e), the elastic part of the generalized stress, flattened."""
        return self.fe.P3.T @ (self.Chat @ e.ravel())


def elastic_operator(fe: FeSpace, law: MaterialLaw, cfg: SolverConfig) -> ElasticOperator:
    key = (law.hooke.lambda_lame, law.hooke.mu, cfg.linear_solver, cfg.cg_tol)
    op = fe._elastic_cache.get(key)
    if op is None:
        op = ElasticOperator(fe, law, cfg)
        fe._elastic_cache[key] = op
    return op


# ---------------------------------------------------------------------------
# Elastoplastic substep
# ---------------------------------------------------------------------------


@dataclass
class PlasticResult:
    u: np.ndarray
    e: np.ndarray
    p: np.ndarray
    iterations: int
    residual: float
    initial_residual: float


def _plastic_hessian(op: ElasticOperator, alpha, law: MaterialLaw) -> np.ndarray:
    fe = op.fe
    m = fe.m
    N = fe.n_nodes
    A = (hardening_mass(alpha, law, fe) + law.w_grad_p * fe.K_s).toarray()
    H = op.schur.copy()
    H4 = H.reshape(N, m, N, m)
    for c in range(m):
        H4[:, c, :, c] += 2.0 * A
    return H


def _lipschitz(H: np.ndarray, minv: np.ndarray, iters: int = 60) -> float:
    """Power iteration for the top eigenvalue of M^{-1/2} H M^{-1/2}."""
    s = np.sqrt(minv)
    x = np.ones(H.shape[0]) / np.sqrt(H.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = s * (H @ (s * x))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 1.0
        lam_new = float(x @ y)
        x = y / ny
        if abs(lam_new - lam) <= 1e-6 * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return max(lam, 1e-300)


def _lipschitz_bound(op: ElasticOperator, alpha, law: MaterialLaw) -> float:
    """Upper bound of the top eigenvalue of M^{-1/2} H M^{-1/2}.

    Uses Mb <= max(b) M_s in the Loewner order, so only the spectra of the
    alpha-independent parts are needed; those are cached on the operator.
    """
    fe = op.fe
    if op._spectra is None:
        minv = 1.0 / np.repeat(fe.lumped, fe.m)
        lam_s = _lipschitz(op.schur, minv)
        ms = 1.0 / fe.lumped
        lam_m = _lipschitz(fe.M_s.toarray(), ms)
        lam_k = _lipschitz(fe.K_s.toarray(), ms) if fe.K_s.nnz else 0.0
        op._spectra = (1.01 * lam_s, 1.01 * lam_m, 1.01 * lam_k)
    lam_s, lam_m, lam_k = op._spectra
    bmax = float(np.max(law.hardening.b(fe.quad6(alpha))))
    return lam_s + 2.0 * (bmax * lam_m + law.w_grad_p * lam_k)


class _Composite:
    """f(p) = 1/2 p.H p - c.p plus Hpot(p - p_prev), flattened node-major."""

    def __init__(self, H, c, fe: FeSpace, law: MaterialLaw, p_prev, L: float | None = None):
        self.H = H
        self.c = c
        self.fe = fe
        self.K = law.constraint
        self.m = fe.m
        self.N = fe.n_nodes
        self.mass = np.repeat(fe.lumped, fe.m)
        self.minv = 1.0 / self.mass
        self.p_prev = p_prev.ravel()
        self.L = 1.01 * _lipschitz(H, self.minv) if L is None else L
        self.t = 1.0 / self.L
        self.stress_scale = max(1.0, float(np.max(np.abs(c) * self.minv)))

    def grad(self, p):
        return self.H @ p - self.c

    def smooth(self, p):
        return 0.5 * p @ (self.H @ p) - self.c @ p

    def value(self, p):
        return self.smooth(p) + plastic_potential(p - self.p_prev, self.K, self.fe)

    def _prox(self, z, t):
        lam = np.full(self.N, t)
        K = self.K
        return kernels.prox_nodes(
            np.ascontiguousarray(z.reshape(self.N, self.m)), lam, K.code, *K.params, K.dim
        ).ravel()

    def gmap(self, p):
        z = p - self.t * self.minv * self.grad(p) - self.p_prev
        q = self._prox(z, self.t)
        G = p - self.p_prev - q
        return G, z

    def residual(self, G) -> float:
        """Optimality residual in stress units, relative to the load's stress scale."""
        return float(np.max(np.abs(G))) / self.t / self.stress_scale if G.size else 0.0

    def newton_direction(self, G, z):
        K = self.K
        lam = np.full(self.N, self.t)
        D = kernels.prox_jacobian_nodes(np.ascontiguousarray(z.reshape(self.N, self.m)), lam,
                                        K.code, *K.params, K.dim)
        n = self.N * self.m
        # J = I - D + t D M^{-1} H, assembled block-row by block-row.
        MH = (self.t * self.minv)[:, None] * self.H
        DMH = np.einsum("iab,ibk->iak", D, MH.reshape(self.N, self.m, n)).reshape(n, n)
        J = DMH
        idx = np.arange(n)
        J[idx, idx] += 1.0
        Dfull = np.zeros((n, n))
        for i in range(self.N):
            sl = slice(i * self.m, (i + 1) * self.m)
            Dfull[sl, sl] = D[i]
        J -= Dfull
        try:
            return np.linalg.solve(J, -G)
        except np.linalg.LinAlgError:
            return None

    def fista(self, p, iters):
        """Accelerated proximal gradient with function-value restart."""
        y = p.copy()
        x_old = p.copy()
        tk = 1.0
        f_old = self.value(p)
        for _ in range(iters):
            z = y - self.t * self.minv * self.grad(y) - self.p_prev
            x = self.p_prev + self._prox(z, self.t)
            f_new = self.value(x)
            if f_new > f_old:
                # restart from the last accepted iterate
                y = x_old.copy()
                tk = 1.0
                continue
            tk_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            y = x + ((tk - 1.0) / tk_new) * (x - x_old)
            x_old, tk, f_old = x, tk_new, f_new
        return x_old


def _solve_plastic(comp: _Composite, p0: np.ndarray, tol: float, max_inner: int):
    p = p0.copy()
    G, z = comp.gmap(p)
    res0 = res = comp.residual(G)
    it = 0
    fails = 0
    while res > tol and it < max_inner:
        it += 1
        accepted = False
        if fails < 3:
            d = comp.newton_direction(G, z)
            if d is not None and np.all(np.isfinite(d)):
                nG = np.linalg.norm(G)
                s = 1.0
                for _ in range(4):
                    p_try = p + s * d
                    G_try, z_try = comp.gmap(p_try)
                    if np.linalg.norm(G_try) <= (1.0 - 1e-4 * s) * nG:
                        p, G, z = p_try, G_try, z_try
                        accepted = True
                        break
                    s *= 0.5
        if not accepted:
            fails += 1
            p = comp.fista(p, 50)
            G, z = comp.gmap(p)
            if fails >= 3:
                fails = 0
        res = comp.residual(G)
    if res > tol:
        raise SolverError("elastoplastic substep did not converge", res)
    # The final iterate is the prox output, hence exactly cone-feasible.
    p_out = comp.p_prev + (p - comp.p_prev - G)
    return p_out, it, res, res0


def elastoplastic_step(alpha_fixed, p_prev, load: LoadProgram, t: float, law: MaterialLaw,
                       fe: FeSpace, cfg: SolverConfig = SolverConfig(), p_start=None) -> PlasticResult:
    """Minimize Q(e) + Qtilde(alpha, p) + |grad p|^2 + Hpot(p - p_prev) over admissible (u, e, p)."""
    op = elastic_operator(fe, law, cfg)
    e_lift = fe.boundary_strain(load, t)
    _, e0 = op.strain(e_lift, np.zeros((fe.n_nodes, fe.m)))
    c = op.dual_stress(e0)
    H = _plastic_hessian(op, alpha_fixed, law)
    comp = _Composite(H, c, fe, law, np.asarray(p_prev), _lipschitz_bound(op, alpha_fixed, law))
    p0 = np.asarray(p_prev if p_start is None else p_start, dtype=float).ravel()
    p, it, res, res0 = _solve_plastic(comp, p0, cfg.tol_pd, cfg.max_inner)
    p = p.reshape(fe.n_nodes, fe.m)
    uf, e = op.strain(e_lift, p)
    return PlasticResult(op.full_u(uf, load, t), e, p, it, res, res0)


# ---------------------------------------------------------------------------
# Damage substep
# ---------------------------------------------------------------------------


@dataclass
class DamageResult:
    alpha: np.ndarray
    iterations: int
    residual: float
    initial_residual: float


def _box_kkt(x, g, lo, hi, mass) -> float:
    return float(np.max(np.abs(x - np.clip(x - g / mass, lo, hi)))) if x.size else 0.0


def damage_step(e_fixed, p_fixed, alpha_prev, eps: float, tau: float, law: MaterialLaw, fe: FeSpace,
                cfg: SolverConfig = SolverConfig(), alpha_start=None) -> DamageResult:
    """Minimize D + |grad alpha|^2 + Qtilde + eps/(2 tau)|alpha - alpha_prev|^2 on 0 <= alpha <= alpha_prev."""
    del e_fixed  # the elastic energy does not depend on alpha
    alpha_prev = np.asarray(alpha_prev, dtype=float)
    if np.any(alpha_prev < 0.0) or np.any(alpha_prev > 1.0):
        raise ValueError("alpha_prev must lie in [0, 1]")
    if eps < 0.0 or tau <= 0.0:
        raise ValueError("need eps >= 0 and tau > 0")
    lo = np.zeros_like(alpha_prev)
    hi = alpha_prev
    H = alpha_hessian(p_fixed, law, fe)
    if eps > 0.0:
        H = (H + (eps / tau) * fe.M_s).tocsr()
    mass = fe.lumped

    def grad(a):
        g = partial_alpha_vector(a, p_fixed, law, fe)
        if eps > 0.0:
            g = g + (eps / tau) * (fe.M_s @ (a - alpha_prev))
        return g

    x = np.clip(alpha_prev if alpha_start is None else np.asarray(alpha_start, dtype=float), lo, hi)
    g = grad(x)
    res0 = res = _box_kkt(x, g, lo, hi, mass)
    gscale = max(1.0, float(np.max(np.abs(g) / mass)))
    tol = 1e-3 * cfg.tol_pd
    hdiag = H.diagonal()
    reg = 1e-13 * max(1.0, float(np.max(np.abs(hdiag)))) if hdiag.size else 0.0
    it = 0
    while res > tol and it < cfg.max_inner:
        it += 1
        eps_act = min(1e-8, res)
        fixed = ((x <= lo + eps_act) & (g > 0.0)) | ((x >= hi - eps_act) & (g <= 0.0)) | (hi - lo <= 0.0)
        x[fixed & (g > 0.0)] = lo[fixed & (g > 0.0)]
        x[fixed & (g <= 0.0)] = hi[fixed & (g <= 0.0)]
        # clamping can flip the gradient sign of a nearly active node; release those
        g = grad(x)
        fixed &= ((x <= lo) & (g > 0.0)) | ((x >= hi) & (g <= 0.0)) | (hi - lo <= 0.0)
        free = ~fixed
        d = np.zeros_like(x)
        if np.any(free):
            Hff = H[free][:, free]
            g_f = g[free]
            Hreg = (Hff + reg * sp.identity(Hff.shape[0])).tocsc()
            try:
                d[free] = spla.spsolve(Hreg, -g_f)
            except RuntimeError:
                d[free] = -g_f / mass[free]
            if not np.all(np.isfinite(d)):
                d[free] = -g_f / mass[free]
        g = grad(x)
        s = 1.0
        moved = False
        for _ in range(40):
            x_new = np.clip(x + s * d, lo, hi)
            dx = x_new - x
            gd = float(g @ dx)
            dJ = gd + 0.5 * float(dx @ (H @ dx))
            if dJ <= 1e-4 * gd or not np.any(dx):
                moved = bool(np.any(dx))
                break
            s *= 0.5
        if moved:
            x = x_new
        else:
            # projected-gradient step in the lumped metric as a safeguard
            x_new = np.clip(x - g / (mass * max(1.0, gscale)), lo, hi)
            if np.array_equal(x_new, x):
                g = grad(x)
                res = _box_kkt(x, g, lo, hi, mass)
                break
            x = x_new
        g = grad(x)
        res = _box_kkt(x, g, lo, hi, mass)
    if res > max(tol, cfg.tol_pd):
        raise SolverError("damage substep did not converge", res)
    return DamageResult(np.clip(x, lo, hi), it, res, res0)


# ---------------------------------------------------------------------------
# Alternating minimization
# ---------------------------------------------------------------------------


def incremental_objective(alpha, e, p, p_prev, alpha_prev, eps, tau, law, fe) -> float:
    val = energy_parts(alpha, e, p, law, fe).total
    val += plastic_potential(p - p_prev, law.constraint, fe)
    if eps > 0.0:
        da = alpha - alpha_prev
        val += 0.5 * eps / tau * float(da @ (fe.M_s @ da))
    return val


@dataclass
class StepResult:
    state: State
    iterations: int
    energy_trace: list = field(default_factory=list)
    objective: float = float("nan")
    start: str = ""
    flagged: bool = False
    message: str = ""


START_NAMES = ("previous", "elastic_predictor", "relaxed_damage")


def _alternate(prev: State, load, t, eps, tau, law, fe, cfg, start: str):
    op = elastic_operator(fe, law, cfg)
    e_lift = fe.boundary_strain(load, t)
    alpha = prev.alpha.copy()
    p = prev.p.copy()
    if start == "relaxed_damage":
        alpha = np.zeros_like(alpha)
    uf, e = op.strain(e_lift, p)
    u = op.full_u(uf, load, t)
    obj = lambda a, e_, p_: incremental_objective(a, e_, p_, prev.p, prev.alpha, eps, tau, law, fe)
    F = obj(alpha, e, p)
    trace = [F]
    damage_first = start == "elastic_predictor"
    flagged = False
    message = ""
    sweeps = 0
    for sweep in range(cfg.max_outer):
        sweeps = sweep + 1
        if damage_first and sweep == 0:
            dres = damage_step(e, p, prev.alpha, eps, tau, law, fe, cfg, alpha_start=alpha)
            alpha = dres.alpha
        pres = elastoplastic_step(alpha, prev.p, load, t, law, fe, cfg, p_start=p)
        u, e, p = pres.u, pres.e, pres.p
        dres = damage_step(e, p, prev.alpha, eps, tau, law, fe, cfg, alpha_start=alpha)
        alpha_change = float(np.max(np.abs(dres.alpha - alpha))) if alpha.size else 0.0
        alpha = dres.alpha
        F_new = obj(alpha, e, p)
        if F_new > F + 1e-12 * max(1.0, abs(F)):
            flagged = True
            message = f"objective increased in sweep {sweeps}: {F} -> {F_new}"
        trace.append(F_new)
        decrease = F - F_new
        F = min(F, F_new)
        plastic_ok = pres.initial_residual <= cfg.tol_pd
        damage_ok = dres.initial_residual <= 1e-3 * cfg.tol_pd or alpha_change <= 1e-13
        if sweep > 0 and plastic_ok and damage_ok:
            break
        if sweep > 0 and decrease <= cfg.tol_energy_stagnation * 1e-6 * max(1.0, abs(F)) and plastic_ok:
            break
    else:
        flagged = True
        message = message or f"no first-order convergence within {cfg.max_outer} sweeps"
    # Final consistency: p optimal for the final alpha.
    pres = elastoplastic_step(alpha, prev.p, load, t, law, fe, cfg, p_start=p)
    if pres.iterations:
        u, e, p = pres.u, pres.e, pres.p
        F = obj(alpha, e, p)
        trace.append(F)
    state = State(t=t, alpha=alpha, u=u, e=e, p=p, meta={"start": start, "sweeps": sweeps})
    return state, F, trace, sweeps, flagged, message


def incremental_minimize(prev: State, load: LoadProgram, t: float, eps: float, tau: float,
                         law: MaterialLaw, fe: FeSpace, cfg: SolverConfig = SolverConfig()) -> StepResult:
    """Multi-start alternating minimization of the incremental problem at time t."""
    if eps < 0.0 or tau <= 0.0:
        raise ValueError("need eps >= 0 and tau > 0")
    best = None
    for start in START_NAMES[: cfg.n_starts]:
        state, F, trace, sweeps, flagged, message = _alternate(prev, load, t, eps, tau, law, fe, cfg, start)
        rel = 1e-12 * max(1.0, abs(F))
        if best is None or F < best.objective - rel:
            best = StepResult(state, sweeps, trace, F, start, flagged, message)
    best.state.meta["flagged"] = best.flagged
    return best
