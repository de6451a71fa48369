"""Total energy, its damage derivative, the plastic potential and the slope Psi.

Discretization of each term:

* elastic  Q(e) = 1/2 sum_K |K| C e_K : e_K (exact, e elementwise constant);
* damage   D(alpha) = int d(alpha) and hardening int b(alpha) |p|^2 with the
  degree-4 rule (exact for the polynomial profiles provided);
* gradient terms through the stiffness quadratic forms;
* plastic potential with vertex (lumped) quadrature, so it decouples by node.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.optimize import lsq_linear

from .fem import FeSpace
from .tensor import ConstraintSet, MaterialLaw


@dataclass
class State:
    """One time slice of the evolution."""

    t: float
    alpha: np.ndarray
    u: np.ndarray
    e: np.ndarray
    p: np.ndarray
    meta: dict = field(default_factory=dict)

    def copy(self) -> "State":
        return replace(
            self,
            alpha=self.alpha.copy(),
            u=self.u.copy(),
            e=self.e.copy(),
            p=self.p.copy(),
            meta=dict(self.meta),
        )


def zero_state(fe: FeSpace, t: float = 0.0) -> State:
    return State(
        t=t,
        alpha=np.ones(fe.n_nodes),
        u=np.zeros((0 if fe.homogeneous else fe.n_nodes, 2)),
        e=np.zeros((fe.n_elems, fe.m)),
        p=np.zeros((fe.n_nodes, fe.m)),
    )


@dataclass(frozen=True)
class EnergyBreakdown:
    elastic: float
    damage: float
    grad_alpha: float
    hardening: float
    grad_p: float

    @property
    def total(self) -> float:
        return self.elastic + self.damage + self.grad_alpha + self.hardening + self.grad_p

    def row(self, t: float) -> list[float]:
        return [t, self.elastic, self.damage, self.grad_alpha, self.hardening, self.grad_p, self.total]


def _check_shapes(fe: FeSpace, alpha=None, e=None, p=None):
    if alpha is not None and np.shape(alpha) != (fe.n_nodes,):
        raise ValueError(f"alpha has shape {np.shape(alpha)}, expected ({fe.n_nodes},)")
    if e is not None and np.shape(e) != (fe.n_elems, fe.m):
        raise ValueError(f"e has shape {np.shape(e)}, expected ({fe.n_elems}, {fe.m})")
    if p is not None and np.shape(p) != (fe.n_nodes, fe.m):
        raise ValueError(f"p has shape {np.shape(p)}, expected ({fe.n_nodes}, {fe.m})")


def elastic_energy(e: np.ndarray, law: MaterialLaw, fe: FeSpace) -> float:
    Ce = law.hooke.apply(e)
    return 0.5 * float(np.sum(fe.areas * np.einsum("ij,ij->i", Ce, e)))


def hardening_weights(alpha: np.ndarray, law: MaterialLaw, fe: FeSpace) -> np.ndarray:
    """Quadrature weights w_q b(alpha_q) of the hardening term."""
    return fe.w6 * law.hardening.b(fe.quad6(alpha))


def hardening_mass(alpha: np.ndarray, law: MaterialLaw, fe: FeSpace):
    """Scalar matrix Mb with int b(alpha) p:q = sum_c p_c . Mb q_c."""
    wb = hardening_weights(alpha, law, fe)
    return (fe.N6.T.multiply(wb) @ fe.N6).tocsr()


def energy_parts(alpha, e, p, law: MaterialLaw, fe: FeSpace) -> EnergyBreakdown:
    _check_shapes(fe, alpha, e, p)
    aq = fe.quad6(alpha)
    pq = fe.quad6(p)
    return EnergyBreakdown(
        elastic=elastic_energy(e, law, fe),
        damage=float(np.sum(fe.w6 * law.damage.d(aq))),
        grad_alpha=law.w_grad_alpha * fe.h1_seminorm_sq(alpha),
        hardening=float(np.sum(fe.w6 * law.hardening.b(aq) * np.einsum("ij,ij->i", pq, pq))),
        grad_p=law.w_grad_p * fe.h1_seminorm_sq(p),
    )


def total_energy(s: State, law: MaterialLaw, fe: FeSpace) -> EnergyBreakdown:
    return energy_parts(s.alpha, s.e, s.p, law, fe)


def partial_alpha_vector(alpha, p, law: MaterialLaw, fe: FeSpace) -> np.ndarray:
    """Nodal representation g of d_alpha E, so that d_alpha E[beta] = g . beta."""
    aq = fe.quad6(alpha)
    pq = fe.quad6(p)
    dens = law.damage.dd(aq) + law.hardening.db(aq) * np.einsum("ij,ij->i", pq, pq)
    return fe.N6.T @ (fe.w6 * dens) + 2.0 * law.w_grad_alpha * (fe.K_s @ alpha)


def partial_alpha(s: State, beta, law: MaterialLaw, fe: FeSpace) -> float:
    return float(partial_alpha_vector(s.alpha, s.p, law, fe) @ np.asarray(beta, dtype=float))


def alpha_hessian(p, law: MaterialLaw, fe: FeSpace, alpha=None):
    """Hessian of E in alpha; constant in alpha for the provided profiles."""
    a = np.ones(fe.n_nodes) if alpha is None else alpha
    aq = fe.quad6(a)
    pq = fe.quad6(p)
    curv = fe.w6 * (law.damage.d2d(aq) + law.hardening.d2b(aq) * np.einsum("ij,ij->i", pq, pq))
    return (fe.N6.T.multiply(curv) @ fe.N6 + 2.0 * law.w_grad_alpha * fe.K_s).tocsr()


# ---------------------------------------------------------------------------
# Plastic potential and H-dissipation
# ---------------------------------------------------------------------------


def plastic_potential(q, K: ConstraintSet, fe: FeSpace) -> float:
    """Lumped-quadrature value of int H(q); +inf if a node leaves the cone."""
    h = K.support(np.asarray(q, dtype=float).reshape(fe.n_nodes, fe.m))
    if np.any(np.isinf(h)):
        return float("inf")
    return float(fe.lumped @ h)


def h_variation(traj, t1: float, t2: float) -> float:
    """Sum of the plastic potential of p increments over the stored grid in [t1, t2]."""
    times = np.array([s.t for s in traj.states])
    i1 = np.flatnonzero(np.isclose(times, t1, rtol=0.0, atol=1e-12 * max(1.0, abs(times[-1]))))
    i2 = np.flatnonzero(np.isclose(times, t2, rtol=0.0, atol=1e-12 * max(1.0, abs(times[-1]))))
    if i1.size == 0 or i2.size == 0:
        raise ValueError("h_variation needs grid times of the trajectory")
    i1, i2 = int(i1[0]), int(i2[0])
    if i2 < i1:
        raise ValueError("t1 must not exceed t2")
    K = traj.law.constraint
    total = 0.0
    for j in range(i1 + 1, i2 + 1):
        total += plastic_potential(traj.states[j].p - traj.states[j - 1].p, K, traj.fe)
    return total


# ---------------------------------------------------------------------------
# Generalized stress, stress constraint and equilibrium
# ---------------------------------------------------------------------------


def generalized_stress(alpha, e, p, law: MaterialLaw, fe: FeSpace) -> np.ndarray:
    """Dual nodal field sigma with sigma . q = (Ce, q)_2 - 2(B p, q)_2 - 2 w (grad p, grad q)_2.

    (Ce, q)_2 pairs the elementwise stress with the element average of q,
    matching the kinematic constraint.
    """
    Ce = law.hooke.apply(e) * fe.areas[:, None]
    sig = fe.P.T @ Ce
    sig -= 2.0 * (hardening_mass(alpha, law, fe) @ p)
    sig -= 2.0 * law.w_grad_p * (fe.K_s @ p)
    return np.asarray(sig)


def _random_test_fields(K: ConstraintSet, fe: FeSpace, n_random: int, rng) -> np.ndarray:
    q = rng.normal(size=(n_random, fe.n_nodes, fe.m))
    if K.kind == "drucker_prager":
        # Keep every nodal value in the cone tr q >= tau |dev q| so that the
        # test value is finite and informative.
        n = fe.dim
        trq = q[..., :n].sum(axis=-1)
        q[..., :n] -= (trq / n)[..., None]
        dn = np.sqrt(np.einsum("...i,...i->...", q, q))
        newtr = K.tau * dn * (1.0 + rng.uniform(size=dn.shape))
        q[..., :n] += (newtr / n)[..., None]
    return q


def stress_constraint_residual(s: State, law: MaterialLaw, fe: FeSpace, n_random: int = 20,
                               seed: int = 0) -> float:
    """max over normalized test fields q of sigma . q - int H(q).

    The family contains every node-localized direction (evaluated in closed
    form through the signed distance of sigma_i / m_i to K, which is the sup
    over all unit node-localized q), the +/- nodal Voigt basis directions,
    and ``n_random`` random fields.  A nonpositive value certifies the stress
    constraint on this family.
    """
    K = law.constraint
    sig = generalized_stress(s.alpha, s.e, s.p, law, fe)
    mi = fe.lumped
    mdiag = fe.M_s.diagonal()
    scale = mi / np.sqrt(mdiag)
    vals = [np.max(scale * K.signed_distance(sig / mi[:, None]))]
    eye = np.eye(fe.m)
    for sgn in (1.0, -1.0):
        hb = K.support(sgn * eye)
        v = (sgn * sig - mi[:, None] * hb[None, :]) / np.sqrt(mdiag)[:, None]
        vals.append(np.max(v))
    if n_random > 0:
        rng = np.random.default_rng(seed)
        for q in _random_test_fields(K, fe, n_random, rng):
            nq = fe.norm(q, "L2")
            hq = plastic_potential(q, K, fe)
            vals.append((float(np.sum(sig * q)) - hq) / nq)
    return float(np.max(vals))


def equilibrium_residual(s: State, law: MaterialLaw, fe: FeSpace) -> float:
    """Euclidean norm of the interior block of Bsym^T (|K| C e)."""
    if fe.homogeneous:
        return 0.0
    Ce = (law.hooke.apply(s.e) * fe.areas[:, None]).ravel()
    r = fe.Bsym.T @ Ce
    return float(np.linalg.norm(r[fe.free_dofs]))


# ---------------------------------------------------------------------------
# Slope functional Psi
# ---------------------------------------------------------------------------


def psi_from_gradient(g: np.ndarray, masses: np.ndarray) -> float:
    """Lumped closed form sqrt(sum_{g_i > 0} g_i^2 / m_i)."""
    g = np.asarray(g, dtype=float)
    pos = g > 0.0
    return float(np.sqrt(np.sum(g[pos] ** 2 / masses[pos])))


def psi_qp(g: np.ndarray, M) -> float:
    """Consistent-mass value: sup {g . gamma : gamma >= 0, gamma^T M gamma <= 1}.

    Equals the M^{-1}-distance of g to the nonpositive cone.  Solved as the
    bound-constrained least-squares problem min_{gamma >= 0} 1/2 gamma^T M gamma
    - g . gamma, whose optimal value is -Psi^2 / 2.
    """
    g = np.asarray(g, dtype=float)
    if not np.any(g > 0.0):
        return 0.0
    Md = M.toarray() if hasattr(M, "toarray") else np.asarray(M, dtype=float)
    L = sla.cholesky(Md, lower=True)
    rhs = sla.solve_triangular(L, g, lower=True)
    res = lsq_linear(L.T, rhs, bounds=(0.0, np.inf), method="bvls", tol=1e-14)
    gamma = res.x
    return float(np.sqrt(max(g @ gamma, 0.0)))


def psi_slope(s: State, law: MaterialLaw, fe: FeSpace, method: str = "lumped") -> float:
    g = partial_alpha_vector(s.alpha, s.p, law, fe)
    if method == "lumped":
        return psi_from_gradient(g, fe.lumped)
    if method == "qp":
        return psi_qp(g, fe.M_s)
    raise ValueError(f"unknown psi method {method!r}")
