import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from geodamage import LoadProgram
from geodamage.energy import (
    State,
    energy_parts,
    equilibrium_residual,
    h_variation,
    partial_alpha,
    partial_alpha_vector,
    plastic_potential,
    psi_from_gradient,
    psi_qp,
    psi_slope,
    stress_constraint_residual,
    total_energy,
    zero_state,
)
from geodamage.evolution import Trajectory
from geodamage.fem import homogeneous_space, structured_space
from geodamage.solver import elastoplastic_step
from geodamage.tensor import (
    ConstraintSet,
    DamageDissipation,
    HardeningProfile,
    HookeLaw,
    MaterialLaw,
    to_voigt,
)

from .conftest import BENCH_G, bench_law

FE = structured_space(1, 1, 3, 3)


def linear_law(w1=1.0, w_grad_alpha=1.0):
    return MaterialLaw(
        HookeLaw(1.0, 1.0),
        HardeningProfile("linear", b_max=1.0, b_floor=0.0),
        DamageDissipation("linear", w1=w1),
        ConstraintSet("ball", r_h=1.0),
        w_grad_alpha=w_grad_alpha,
    )


def random_state(fe, rng, scale=1.0):
    s = zero_state(fe)
    s.alpha = rng.uniform(0.2, 1.0, size=fe.n_nodes)
    s.e = scale * rng.normal(size=(fe.n_elems, fe.m))
    s.p = scale * rng.normal(size=(fe.n_nodes, fe.m))
    return s


# ---------------------------------------------------------------------------
# total_energy examples
# ---------------------------------------------------------------------------


def test_sound_unloaded_state_has_zero_energy():
    assert total_energy(zero_state(FE), linear_law(), FE).total == 0.0


def test_uniform_damage_energy():
    s = zero_state(FE)
    s.alpha[:] = 0.5
    assert total_energy(s, linear_law(), FE).total == pytest.approx(0.5, rel=1e-13)


def test_gradient_damage_energy():
    s = zero_state(FE)
    s.alpha = FE.mesh.vertices[:, 0].copy()
    assert total_energy(s, linear_law(w1=0.0), FE).total == pytest.approx(1.0, rel=1e-13)


def test_energy_shape_checks():
    with pytest.raises(ValueError):
        energy_parts(np.ones(3), np.zeros((FE.n_elems, 3)), np.zeros((FE.n_nodes, 3)), linear_law(), FE)


@given(seed=st.integers(0, 2**31 - 1))
def test_energy_nonnegative_and_additive(seed):
    rng = np.random.default_rng(seed)
    s = random_state(FE, rng)
    b = total_energy(s, bench_law(), FE)
    parts = [b.elastic, b.damage, b.grad_alpha, b.hardening, b.grad_p]
    assert all(x >= 0.0 for x in parts)
    assert b.total == sum(parts)
    assert b.row(0.3) == [0.3, *parts, b.total]


# ---------------------------------------------------------------------------
# plastic potential and H-variation
# ---------------------------------------------------------------------------


def test_plastic_potential_examples():
    K = ConstraintSet("ball", r_h=0.8)
    q = np.zeros((FE.n_nodes, 3))
    assert plastic_potential(q, K, FE) == 0.0
    xi = to_voigt(np.array([[0.3, -0.2], [-0.2, 1.1]]))
    q[:] = xi
    assert plastic_potential(q, K, FE) == pytest.approx(float(K.support(xi)[0]), rel=1e-13)
    dp = ConstraintSet("drucker_prager", tau=1.0, kappa=1.0)
    q = np.tile(to_voigt(np.eye(2)), (FE.n_nodes, 1))
    q[4] = to_voigt(np.diag([1.0, -1.0]))
    assert plastic_potential(q, dp, FE) == np.inf


def _linear_p_trajectory(q0, k=8):
    law = bench_law()
    load = LoadProgram(BENCH_G, T=1.0)
    states = []
    for i in range(k + 1):
        s = zero_state(FE, i / k)
        s.p = (i / k) * q0
        states.append(s)
    return Trajectory(states, [{} for _ in range(k)], law, FE, load, 0.0, k)


def test_h_variation_examples():
    rng = np.random.default_rng(0)
    q0 = rng.normal(size=(FE.n_nodes, 3))
    const = _linear_p_trajectory(np.zeros_like(q0))
    assert h_variation(const, 0.0, 1.0) == 0.0
    traj = _linear_p_trajectory(q0)
    H0 = plastic_potential(q0, traj.law.constraint, FE)
    assert h_variation(traj, 0.25, 0.75) == pytest.approx(0.5 * H0, rel=1e-12)
    with pytest.raises(ValueError):
        h_variation(traj, 0.1, 0.5)


# ---------------------------------------------------------------------------
# partial derivative in alpha
# ---------------------------------------------------------------------------


def test_partial_alpha_zero_direction():
    s = random_state(FE, np.random.default_rng(1))
    assert partial_alpha(s, np.zeros(FE.n_nodes), bench_law(), FE) == 0.0


def _richardson(f, h=1e-3):
    d1 = (f(h) - f(-h)) / (2 * h)
    d2 = (f(h / 2) - f(-h / 2)) / h
    return (4 * d2 - d1) / 3


def test_partial_alpha_uniform_state_matches_finite_differences():
    fe = homogeneous_space()
    law = MaterialLaw(
        HookeLaw(1.0, 1.0),
        HardeningProfile("linear", b_max=2.0, b_floor=0.1),
        DamageDissipation("linear", w1=0.7),
        ConstraintSet("ball", r_h=1.0),
    )
    s = zero_state(fe)
    s.alpha[:] = 0.6
    s.p[0] = [0.3, -0.1, 0.2]
    beta = np.ones(1)

    def E(lam):
        c = s.copy()
        c.alpha = s.alpha + lam * beta
        return total_energy(c, law, fe).total

    exact = -0.7 + (-2.0) * float(s.p[0] @ s.p[0])
    assert partial_alpha(s, beta, law, fe) == pytest.approx(exact, rel=1e-13)
    assert _richardson(E) == pytest.approx(exact, rel=1e-9)


@pytest.mark.parametrize("kind", ["ball", "drucker_prager"])
def test_partial_alpha_matches_central_differences(kind):
    law = bench_law(kind)
    rng = np.random.default_rng(7)
    s = random_state(FE, rng)
    g = partial_alpha_vector(s.alpha, s.p, law, FE)
    for _ in range(50):
        beta = rng.normal(size=FE.n_nodes)

        def E(lam):
            c = s.copy()
            c.alpha = s.alpha + lam * beta
            return total_energy(c, law, FE).total

        fd = (E(1e-5) - E(-1e-5)) / 2e-5
        assert abs(g @ beta - fd) <= 1e-5 * max(abs(fd), 1e-12)


# ---------------------------------------------------------------------------
# slope functional
# ---------------------------------------------------------------------------


def test_psi_examples():
    assert psi_from_gradient(np.array([2.0]), np.ones(1)) == 2.0
    assert psi_qp(np.array([2.0]), sp.identity(1)) == pytest.approx(2.0, rel=1e-12)
    g = np.array([2.0, -3.0])
    assert psi_from_gradient(g, np.ones(2)) == 2.0
    assert psi_qp(g, sp.identity(2)) == pytest.approx(2.0, rel=1e-12)
    assert psi_from_gradient(np.array([-1.0, 0.0]), np.ones(2)) == 0.0
    assert psi_qp(np.array([-1.0, 0.0]), sp.identity(2)) == 0.0


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 12))
def test_psi_diagonal_mass_exact(seed, n):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=n)
    m = rng.uniform(0.1, 2.0, size=n)
    a = psi_from_gradient(g, m)
    b = psi_qp(g, sp.diags(m))
    assert a >= 0.0 and b >= 0.0
    assert b == pytest.approx(a, rel=1e-10, abs=1e-14)


@given(seed=st.integers(0, 2**31 - 1))
def test_psi_methods_nonnegative_on_meshes(seed):
    rng = np.random.default_rng(seed)
    s = random_state(FE, rng)
    law = bench_law()
    assert psi_slope(s, law, FE) >= 0.0
    assert psi_slope(s, law, FE, method="qp") >= 0.0


def test_psi_unknown_method():
    with pytest.raises(ValueError):
        psi_slope(zero_state(FE), bench_law(), FE, method="exact")


# ---------------------------------------------------------------------------
# stress constraint and equilibrium
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["ball", "drucker_prager"])
def test_stress_residual_zero_state(kind):
    assert stress_constraint_residual(zero_state(FE), bench_law(kind), FE) <= 0.0


@pytest.mark.parametrize("kind", ["ball", "drucker_prager"])
def test_stress_residual_after_plastic_substep(kind):
    law = bench_law(kind)
    load = LoadProgram(BENCH_G, T=1.0)
    res = elastoplastic_step(np.ones(FE.n_nodes), np.zeros((FE.n_nodes, 3)), load, 1.0, law, FE)
    s = State(1.0, np.ones(FE.n_nodes), res.u, res.e, res.p)
    assert np.max(np.abs(res.p)) > 0.0
    assert stress_constraint_residual(s, law, FE) <= 1e-8
    assert equilibrium_residual(s, law, FE) <= 1e-10
    # inflating the elastic strain far beyond yield is detected
    s.e = 1e3 * s.e
    assert stress_constraint_residual(s, law, FE) > 0.0


def test_equilibrium_detects_random_strain():
    s = random_state(FE, np.random.default_rng(4))
    assert equilibrium_residual(s, bench_law(), FE) > 0.0
    assert equilibrium_residual(zero_state(homogeneous_space()), bench_law(), homogeneous_space()) == 0.0
