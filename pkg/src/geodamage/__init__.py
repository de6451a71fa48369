"""Finite-element simulation and verification of quasistatic gradient-damage /
strain-gradient-plasticity evolutions with energetic, viscous and arc-length
rescaled time discretizations."""

__version__ = "0.1.0"

from .energy import (
    EnergyBreakdown,
    State,
    energy_parts,
    partial_alpha,
    partial_alpha_vector,
    plastic_potential,
    psi_slope,
    stress_constraint_residual,
    total_energy,
    zero_state,
)
from .evolution import Trajectory, discrete_energy_report, make_initial_state, run_energetic, run_viscous
from .fem import FeSpace, Mesh, build_structured_mesh, homogeneous_space, structured_space
from .kernels import BACKEND
from .load import LoadProgram
from .solver import SolverConfig, damage_step, elastoplastic_step, incremental_minimize
from .tensor import (
    ConstraintSet,
    DamageDissipation,
    HardeningProfile,
    HookeLaw,
    MaterialLaw,
    SymTensor,
    apply_hardening,
    apply_hooke,
    prox_support,
    support_function,
)

__all__ = [name for name in dir() if not name.startswith("_")]
