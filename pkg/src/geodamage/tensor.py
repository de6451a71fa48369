"""Symmetric-tensor algebra and the constitutive objects.

Tensors are stored in scaled Voigt form: for n = 2 the vector is
``[xx, yy, sqrt(2) xy]`` and for n = 3 it is
``[xx, yy, zz, sqrt(2) yz, sqrt(2) xz, sqrt(2) xy]``.  With this scaling the
Euclidean dot product of two stored vectors equals the Frobenius product of
the matrices, so every quadratic form below is a plain dot product.

All functions accept stacked arrays of shape ``(..., m)`` with
``m = n(n+1)/2`` unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

SQRT2 = np.sqrt(2.0)

_OFFDIAG = {2: [(0, 1)], 3: [(1, 2), (0, 2), (0, 1)]}


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a constitutive map."""


def voigt_size(n: int) -> int:
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    return n * (n + 1) // 2


def dim_from_size(m: int) -> int:
    if m == 3:
        return 2
    if m == 6:
        return 3
    raise ValueError(f"no symmetric tensor space has Voigt size {m}")


def to_voigt(mat) -> np.ndarray:
    """Matrix (..., n, n) to scaled Voigt (..., m); the matrix is symmetrized."""
    a = np.asarray(mat, dtype=float)
    n = a.shape[-1]
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    diag = [a[..., i, i] for i in range(n)]
    off = [SQRT2 * a[..., i, j] for (i, j) in _OFFDIAG[n]]
    return np.stack(diag + off, axis=-1)


def from_voigt(v) -> np.ndarray:
    """Scaled Voigt (..., m) to matrix (..., n, n)."""
    v = np.asarray(v, dtype=float)
    n = dim_from_size(v.shape[-1])
    out = np.zeros(v.shape[:-1] + (n, n))
    for i in range(n):
        out[..., i, i] = v[..., i]
    for k, (i, j) in enumerate(_OFFDIAG[n]):
        out[..., i, j] = out[..., j, i] = v[..., n + k] / SQRT2
    return out


def identity_voigt(n: int) -> np.ndarray:
    out = np.zeros(voigt_size(n))
    out[:n] = 1.0
    return out


def trace(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = dim_from_size(v.shape[-1])
    return v[..., :n].sum(axis=-1)


def mean(v) -> np.ndarray:
    """sigma_m = tr(sigma) / n."""
    v = np.asarray(v, dtype=float)
    return trace(v) / dim_from_size(v.shape[-1])


def dev(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = dim_from_size(v.shape[-1])
    out = v.copy()
    out[..., :n] -= mean(v)[..., None]
    return out


def frobenius(a, b) -> np.ndarray:
    return np.sum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float), axis=-1)


def norm(v) -> np.ndarray:
    return np.sqrt(frobenius(v, v))


@dataclass(frozen=True)
class SymTensor:
    """A single symmetric n x n tensor held in scaled Voigt storage."""

    dim: int
    voigt: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.voigt, dtype=float).reshape(-1)
        if v.size != voigt_size(self.dim):
            raise ValueError(f"Voigt vector of size {v.size} does not match dim {self.dim}")
        object.__setattr__(self, "voigt", v)

    @classmethod
    def from_matrix(cls, mat) -> "SymTensor":
        a = np.asarray(mat, dtype=float)
        return cls(a.shape[0], to_voigt(a))

    @classmethod
    def identity(cls, n: int) -> "SymTensor":
        return cls(n, identity_voigt(n))

    def matrix(self) -> np.ndarray:
        return from_voigt(self.voigt)

    def trace(self) -> float:
        return float(trace(self.voigt))

    def mean(self) -> float:
        return float(mean(self.voigt))

    def dev(self) -> "SymTensor":
        return SymTensor(self.dim, dev(self.voigt))

    def norm(self) -> float:
        return float(norm(self.voigt))

    def dot(self, other: "SymTensor") -> float:
        return float(frobenius(self.voigt, other.voigt))

    def __add__(self, other: "SymTensor") -> "SymTensor":
        return SymTensor(self.dim, self.voigt + other.voigt)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        return SymTensor(self.dim, self.voigt - other.voigt)

    def __mul__(self, c: float) -> "SymTensor":
        return SymTensor(self.dim, c * self.voigt)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# Elasticity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HookeLaw:
    """Isotropic Hooke law sigma = lambda tr(e) I + 2 mu e."""

    lambda_lame: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if not self.lambda_lame >= 0.0:
            raise DomainError("lambda_lame must be >= 0")
        if not self.mu > 0.0:
            raise DomainError("mu must be > 0")

    @property
    def gamma1(self) -> float:
        return 2.0 * self.mu

    def gamma2(self, n: int) -> float:
        return n * self.lambda_lame + 2.0 * self.mu

    def matrix(self, n: int) -> np.ndarray:
        """Voigt matrix of C; symmetric, eigenvalues 2 mu and n lambda + 2 mu."""
        one = identity_voigt(n)
        return self.lambda_lame * np.outer(one, one) + 2.0 * self.mu * np.eye(voigt_size(n))

    def apply(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        n = dim_from_size(e.shape[-1])
        out = 2.0 * self.mu * e
        out[..., :n] += self.lambda_lame * trace(e)[..., None]
        return out


def apply_hooke(law: HookeLaw, e: SymTensor) -> SymTensor:
    return SymTensor(e.dim, law.apply(e.voigt))


# ---------------------------------------------------------------------------
# Hardening and damage profiles
# ---------------------------------------------------------------------------

HARDENING_KINDS = ("linear", "quadratic", "softening")


@dataclass(frozen=True)
class HardeningProfile:
    """Isotropic hardening B(alpha) = b(alpha) Id.

    ``linear``: b = b_floor + b_max (1 - alpha); ``quadratic``:
    b = b_floor + b_max (1 - alpha)^2; ``softening``: b = b_floor + b_max alpha^2.
    All three satisfy b >= 0 on [0, 1] and b'(0) <= 0.  Only ``softening``
    releases hardening energy as damage grows, so it is the one that drives
    damage in simulations.
    """

    kind: str = "softening"
    b_max: float = 1.0
    b_floor: float = 0.0

    def __post_init__(self):
        if self.kind not in HARDENING_KINDS:
            raise DomainError(f"unknown hardening kind {self.kind!r}")
        if not (self.b_max >= 0.0 and self.b_floor >= 0.0):
            raise DomainError("b_max and b_floor must be >= 0")

    def b(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if self.kind == "linear":
            return self.b_floor + self.b_max * (1.0 - a)
        if self.kind == "quadratic":
            return self.b_floor + self.b_max * (1.0 - a) ** 2
        return self.b_floor + self.b_max * a**2

    def db(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if self.kind == "linear":
            return np.full_like(a, -self.b_max)
        if self.kind == "quadratic":
            return -2.0 * self.b_max * (1.0 - a)
        return 2.0 * self.b_max * a

    def d2b(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if self.kind == "linear":
            return np.zeros_like(a)
        return np.full_like(a, 2.0 * self.b_max)

    def apply(self, alpha, p) -> np.ndarray:
        return np.asarray(self.b(alpha))[..., None] * np.asarray(p, dtype=float)


def apply_hardening(profile: HardeningProfile, alpha: float, p: SymTensor) -> SymTensor:
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    return SymTensor(p.dim, profile.apply(alpha, p.voigt))


DAMAGE_KINDS = ("linear", "quadratic")


@dataclass(frozen=True)
class DamageDissipation:
    """Damage dissipation density: ``linear`` w1 (1 - alpha), ``quadratic`` w1 (1 - alpha)^2."""

    kind: str = "linear"
    w1: float = 1.0

    def __post_init__(self):
        if self.kind not in DAMAGE_KINDS:
            raise DomainError(f"unknown damage kind {self.kind!r}")
        if not self.w1 >= 0.0:
            raise DomainError("w1 must be >= 0")

    def d(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if self.kind == "linear":
            return self.w1 * (1.0 - a)
        return self.w1 * (1.0 - a) ** 2

    def dd(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if self.kind == "linear":
            return np.full_like(a, -self.w1)
        return -2.0 * self.w1 * (1.0 - a)

    def d2d(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if self.kind == "linear":
            return np.zeros_like(a)
        return np.full_like(a, 2.0 * self.w1)


# ---------------------------------------------------------------------------
# Constraint sets, support function and prox
# ---------------------------------------------------------------------------

CONSTRAINT_KINDS = ("ball", "drucker_prager")


@dataclass(frozen=True)
class ConstraintSet:
    """Closed convex set K of admissible generalized stresses.

    ``ball``: {|sigma| <= r_h}.  ``drucker_prager``:
    {tau sigma_m + |sigma_D| <= kappa} with sigma_m = tr(sigma)/n.
    """

    kind: str = "ball"
    r_h: float = 1.0
    tau: float = 1.0
    kappa: float = 1.0
    dim: int = 2
    r_eff: float = field(init=False)

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise DomainError(f"unknown constraint kind {self.kind!r}")
        voigt_size(self.dim)
        if self.kind == "ball":
            if not self.r_h > 0.0:
                raise DomainError("r_h must be > 0")
            r = self.r_h
        else:
            if not (self.tau > 0.0 and self.kappa > 0.0):
                raise DomainError("tau and kappa must be > 0")
            # Largest centred ball inside the cone: maximize tau s_m + |s_D|
            # on the sphere n s_m^2 + |s_D|^2 = r^2.
            r = self.kappa / np.sqrt(1.0 + self.tau**2 / self.dim)
        object.__setattr__(self, "r_eff", float(r))

    @property
    def code(self) -> int:
        return 0 if self.kind == "ball" else 1

    @property
    def params(self) -> tuple[float, float]:
        if self.kind == "ball":
            return (self.r_h, 0.0)
        return (self.tau, self.kappa)

    def support(self, xi) -> np.ndarray:
        """H(xi) = sup_{sigma in K} sigma : xi, +inf where unbounded."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return kernels.support_nodes(np.ascontiguousarray(xi), self.code, *self.params, self.dim)

    def prox(self, xi, lam) -> np.ndarray:
        """argmin_q 1/2 |q - xi|^2 + lam H(q), nodewise for stacked xi."""
        xi = np.asarray(xi, dtype=float)
        z = np.ascontiguousarray(np.atleast_2d(xi))
        lam_arr = np.broadcast_to(np.asarray(lam, dtype=float), (z.shape[0],)).copy()
        if np.any(lam_arr <= 0.0):
            raise DomainError("prox parameter must be > 0")
        out = kernels.prox_nodes(z, lam_arr, self.code, *self.params, self.dim)
        return out.reshape(xi.shape)

    def prox_jacobian(self, xi, lam) -> np.ndarray:
        z = np.ascontiguousarray(np.atleast_2d(np.asarray(xi, dtype=float)))
        lam_arr = np.broadcast_to(np.asarray(lam, dtype=float), (z.shape[0],)).copy()
        return kernels.prox_jacobian_nodes(z, lam_arr, self.code, *self.params, self.dim)

    def signed_distance(self, sigma) -> np.ndarray:
        """Signed Euclidean distance of sigma to the boundary of K (positive outside)."""
        s = np.atleast_2d(np.asarray(sigma, dtype=float))
        if self.kind == "ball":
            return norm(s) - self.r_h
        proj = self.project(s)
        outside = norm(s - proj)
        c = self.tau / np.sqrt(self.dim)
        inside = (self.tau * mean(s) + norm(dev(s)) - self.kappa) / np.sqrt(1.0 + c * c)
        return np.where(outside > 0.0, outside, np.minimum(inside, 0.0))

    def project(self, sigma) -> np.ndarray:
        """Euclidean projection onto K (Moreau: Pi_K(s) = s - prox_H(s) with lam = 1)."""
        s = np.atleast_2d(np.asarray(sigma, dtype=float))
        return s - self.prox(s, 1.0)


def support_function(xi: SymTensor, K: ConstraintSet) -> float:
    return float(K.support(xi.voigt)[0])


def prox_support(xi: SymTensor, lam: float, K: ConstraintSet) -> SymTensor:
    return SymTensor(xi.dim, K.prox(xi.voigt, lam))


@dataclass(frozen=True)
class MaterialLaw:
    """Everything pointwise that enters the energy."""

    hooke: HookeLaw = field(default_factory=HookeLaw)
    hardening: HardeningProfile = field(default_factory=HardeningProfile)
    damage: DamageDissipation = field(default_factory=DamageDissipation)
    constraint: ConstraintSet = field(default_factory=ConstraintSet)
    w_grad_alpha: float = 1.0
    w_grad_p: float = 1.0

    def __post_init__(self):
        if not (self.w_grad_alpha >= 0.0 and self.w_grad_p >= 0.0):
            raise DomainError("gradient weights must be >= 0")

    @property
    def dim(self) -> int:
        return self.constraint.dim
