"""P1 finite elements on structured crossed-diagonal triangulations.

Fields and storage
------------------
alpha : (nv,) nodal scalar.
u     : (nv, n) nodal vector, flattened node-major in the operators.
p     : (nv, m) nodal tensor in scaled Voigt storage.
e     : (nt, m) elementwise-constant tensor.

The kinematic constraint E u = e + p is imposed per element with p averaged
to the element (the P1 interpolant of p evaluated at the centroid).  The
homogeneous space is a single material point with vanishing gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .load import LoadProgram
from .tensor import SQRT2, voigt_size

# Symmetric triangle rules in barycentric coordinates (weights sum to 1).
_Q3_PTS = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_Q3_W = np.full(3, 1 / 3)
_A6 = 0.44594849091596488632
_B6 = 0.09157621350977074346
_Q6_PTS = np.array(
    [
        [1 - 2 * _A6, _A6, _A6],
        [_A6, 1 - 2 * _A6, _A6],
        [_A6, _A6, 1 - 2 * _A6],
        [1 - 2 * _B6, _B6, _B6],
        [_B6, 1 - 2 * _B6, _B6],
        [_B6, _B6, 1 - 2 * _B6],
    ]
)
_Q6_W = np.array([0.22338158967801146570] * 3 + [0.10995174365532186764] * 3)


class MeshError(ValueError):
    """Invalid mesh parameters."""


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertices: np.ndarray
    areas: np.ndarray = field(init=False)
    grads: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary_vertices = np.asarray(self.boundary_vertices, dtype=np.int64)
        x = self.vertices[self.triangles]  # (nt, 3, 2)
        d1 = x[:, 1] - x[:, 0]
        d2 = x[:, 2] - x[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det <= 0.0):
            raise MeshError("triangles must be positively oriented with nonzero area")
        self.areas = 0.5 * det
        # Barycentric gradients: rows of inv([[1,1,1],[x],[y]]) columns 1:3.
        mats = np.ones((len(det), 3, 3))
        mats[:, 1, :] = x[:, :, 0]
        mats[:, 2, :] = x[:, :, 1]
        self.grads = np.linalg.inv(mats)[:, :, 1:]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def export_text(self) -> str:
        """Plain-text listing: ``v x y`` per vertex then ``t i j k`` per triangle."""
        lines = [f"# vertices {self.n_vertices} triangles {self.n_triangles}"]
        lines += [f"v {x!r} {y!r}" for x, y in self.vertices]
        lines += [f"t {i} {j} {k}" for i, j, k in self.triangles]
        return "\n".join(lines) + "\n"


def build_structured_mesh(lx: float, ly: float, nx: int, ny: int) -> Mesh:
    """Crossed-diagonal triangulation of [0, lx] x [0, ly].

    Lattice vertices come first (row-major, x fastest), then one centre
    vertex per cell; each cell is split into four triangles.
    """
    if not (lx > 0 and ly > 0):
        raise MeshError("domain lengths must be positive")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError("nx and ny must be integers >= 1")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    lattice = np.column_stack([X.ravel(), Y.ravel()])
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    CX, CY = np.meshgrid(cx, cy)
    centres = np.column_stack([CX.ravel(), CY.ravel()])
    verts = np.vstack([lattice, centres])
    nl = len(lattice)
    tris = []
    for j in range(ny):
        for i in range(nx):
            v00 = j * (nx + 1) + i
            v10 = v00 + 1
            v01 = v00 + nx + 1
            v11 = v01 + 1
            c = nl + j * nx + i
            tris += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    on_bnd = (ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)
    bnd = np.flatnonzero(on_bnd.ravel())
    return Mesh(verts, np.array(tris), bnd)


def _basis_matrix(mesh: Mesh, pts: np.ndarray, weights: np.ndarray):
    nt = mesh.n_triangles
    nq = len(weights)
    rows = np.repeat(np.arange(nt * nq), 3)
    cols = np.repeat(mesh.triangles, nq, axis=0).ravel()
    vals = np.tile(pts, (nt, 1)).ravel()
    N = sp.csr_matrix((vals, (rows, cols)), shape=(nt * nq, mesh.n_vertices))
    w = (mesh.areas[:, None] * weights[None, :]).ravel()
    return N, w


class FeSpace:
    """Assembled P1 operators for alpha, u and p on a mesh (or a single point).

    Attributes
    ----------
    M_s, K_s : scalar mass and stiffness (csr).
    M_t, K_t : tensor mass and stiffness, ``kron(M_s, I_m)`` and ``kron(K_s, I_m)``.
    M_v : vector mass.
    lumped : row sums of M_s.
    Bsym : nodal u (node-major) to elementwise Voigt strain.
    P : node-to-element averaging; P3 = kron(P, I_m) acts on flattened p.
    N6, w6 / N3, w3 : degree-4 and degree-2 quadrature evaluation matrices.
    """

    def __init__(self, mesh: Mesh | None = None, dim: int = 2, homogeneous_area: float | None = None):
        self.dim = dim
        self.m = voigt_size(dim)
        self.homogeneous = mesh is None
        if self.homogeneous:
            if dim != 2:
                raise MeshError("the homogeneous space is implemented for n = 2")
            area = 1.0 if homogeneous_area is None else float(homogeneous_area)
            if not area > 0:
                raise MeshError("homogeneous area must be positive")
            self.mesh = None
            self.n_nodes = 1
            self.n_elems = 1
            self.areas = np.array([area])
            self.M_s = sp.csr_matrix([[area]])
            self.K_s = sp.csr_matrix((1, 1))
            self.P = sp.csr_matrix([[1.0]])
            self.N6 = self.N3 = sp.csr_matrix([[1.0]])
            self.w6 = self.w3 = np.array([area])
            self.Bsym = sp.csr_matrix((self.m, 0))
            self.boundary_dofs = np.zeros(0, dtype=np.int64)
            self.free_dofs = np.zeros(0, dtype=np.int64)
        else:
            if dim != 2:
                raise MeshError("meshes are two-dimensional")
            self.mesh = mesh
            self.n_nodes = mesh.n_vertices
            self.n_elems = mesh.n_triangles
            self.areas = mesh.areas
            self._assemble_scalar()
            self._assemble_bsym()
            nb = mesh.boundary_vertices
            self.boundary_dofs = np.sort(np.concatenate([2 * nb, 2 * nb + 1]))
            self.free_dofs = np.setdiff1d(np.arange(2 * self.n_nodes), self.boundary_dofs)
        self.area = float(self.areas.sum())
        self.lumped = np.asarray(self.M_s.sum(axis=1)).ravel()
        m = self.m
        self.M_t = sp.kron(self.M_s, sp.identity(m), format="csr")
        self.K_t = sp.kron(self.K_s, sp.identity(m), format="csr")
        self.M_v = sp.kron(self.M_s, sp.identity(2), format="csr")
        self.P3 = sp.kron(self.P, sp.identity(m), format="csr")
        self._elastic_cache = {}

    # -- assembly -----------------------------------------------------------

    def _assemble_scalar(self):
        mesh = self.mesh
        tri = mesh.triangles
        A = mesh.areas
        G = mesh.grads
        ke = A[:, None, None] * np.einsum("kid,kjd->kij", G, G)
        me = A[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        nv = mesh.n_vertices
        K = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(nv, nv))
        M = sp.csr_matrix((me.ravel(), (rows, cols)), shape=(nv, nv))
        self.K_s = (0.5 * (K + K.T)).tocsr()
        self.M_s = (0.5 * (M + M.T)).tocsr()
        self.P = sp.csr_matrix(
            (np.full(tri.size, 1.0 / 3.0), (np.repeat(np.arange(len(tri)), 3), tri.ravel())),
            shape=(len(tri), nv),
        )
        self.N6, self.w6 = _basis_matrix(mesh, _Q6_PTS, _Q6_W)
        self.N3, self.w3 = _basis_matrix(mesh, _Q3_PTS, _Q3_W)

    def _assemble_bsym(self):
        mesh = self.mesh
        tri = mesh.triangles
        G = mesh.grads
        nt = len(tri)
        rows, cols, vals = [], [], []
        h = SQRT2 / 2.0
        for a in range(3):
            gx = G[:, a, 0]
            gy = G[:, a, 1]
            ux = 2 * tri[:, a]
            uy = ux + 1
            r = 3 * np.arange(nt)
            rows += [r, r + 1, r + 2, r + 2]
            cols += [ux, uy, ux, uy]
            vals += [gx, gy, h * gy, h * gx]
        self.Bsym = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(3 * nt, 2 * mesh.n_vertices),
        )

    # -- field helpers --------------------------------------------------------

    def quad6(self, f: np.ndarray) -> np.ndarray:
        """Values of a nodal field at the degree-4 quadrature points."""
        return self.N6 @ f

    def dirichlet_lift(self, load: LoadProgram, t: float) -> np.ndarray:
        """Nodal interpolation of w(t, .) at all vertices, shape (nv, 2)."""
        if self.homogeneous:
            return np.zeros((0, 2))
        return load.w(t, self.mesh.vertices)

    def boundary_strain(self, load: LoadProgram, t: float) -> np.ndarray:
        """Element strain generated by the boundary values alone (interior u = 0).

        In the homogeneous space this is the imposed mean strain ramp(t) sym(G).
        """
        if self.homogeneous:
            return (load.ramp(t) * load.sym_G)[None, :]
        u = np.zeros(2 * self.n_nodes)
        wl = self.dirichlet_lift(load, t).ravel()
        u[self.boundary_dofs] = wl[self.boundary_dofs]
        return (self.Bsym @ u).reshape(self.n_elems, self.m)

    def strain(self, u: np.ndarray) -> np.ndarray:
        if self.homogeneous:
            raise ValueError("the homogeneous space has no displacement field")
        return (self.Bsym @ np.asarray(u).ravel()).reshape(self.n_elems, self.m)

    def average(self, p: np.ndarray) -> np.ndarray:
        """Element averages of a nodal tensor field, (nt, m)."""
        return self.P @ p

    # -- norms ----------------------------------------------------------------

    def norm(self, f: np.ndarray, kind: str = "L2", elementwise: bool = False) -> float:
        """L1, L2, H1 or L4 norm of a nodal (or elementwise-constant) field.

        Tensor and vector values use the pointwise Euclidean (= Frobenius) norm.
        """
        f = np.asarray(f, dtype=float)
        if kind not in ("L1", "L2", "H1", "L4"):
            raise ValueError(f"unknown norm kind {kind!r}")
        if elementwise:
            v = f.reshape(self.n_elems, -1)
            pt = np.sqrt(np.einsum("ij,ij->i", v, v))
            if kind == "L1":
                return float(np.sum(self.areas * pt))
            if kind == "L2":
                return float(np.sqrt(np.sum(self.areas * pt**2)))
            if kind == "L4":
                return float(np.sum(self.areas * pt**4) ** 0.25)
            raise ValueError("H1 norm is undefined for elementwise-constant fields")
        v = f.reshape(self.n_nodes, -1)
        if kind in ("L2", "H1"):
            s = float(np.einsum("ic,ic->", v, self.M_s @ v))
            if kind == "H1":
                s += float(np.einsum("ic,ic->", v, self.K_s @ v))
            return float(np.sqrt(max(s, 0.0)))
        if kind == "L1":
            q = self.N3 @ v
            return float(np.sum(self.w3 * np.sqrt(np.einsum("ij,ij->i", q, q))))
        q = self.N6 @ v
        return float(np.sum(self.w6 * np.einsum("ij,ij->i", q, q) ** 2) ** 0.25)

    def h1_seminorm_sq(self, f: np.ndarray) -> float:
        """Sum of squared element gradients (nonnegative, unlike f . K f in floating point)."""
        if self.homogeneous:
            return 0.0
        v = np.asarray(f, dtype=float).reshape(self.n_nodes, -1)
        grad = np.einsum("kad,kac->kdc", self.mesh.grads, v[self.mesh.triangles])
        return float(np.sum(self.areas * np.einsum("kdc,kdc->k", grad, grad)))


def homogeneous_space(area: float = 1.0) -> FeSpace:
    """One material point of the given area; all gradient operators vanish."""
    return FeSpace(None, 2, homogeneous_area=area)


def structured_space(lx: float = 1.0, ly: float = 1.0, nx: int = 8, ny: int = 8) -> FeSpace:
    return FeSpace(build_structured_mesh(lx, ly, nx, ny))
