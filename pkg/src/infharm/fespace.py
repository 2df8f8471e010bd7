"""Continuous piecewise-linear vector fields on a TriMesh."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .mesh import TriMesh
from .quadrature import TRIANGLE_POINTS, TRIANGLE_WEIGHTS


class EvaluationError(ValueError):
    """A function returned a non-finite value at a mesh vertex."""

    def __init__(self, vertex, point):
        super().__init__(f"non-finite value at vertex {vertex} {tuple(point)}")
        self.vertex = vertex
        self.point = point


@dataclass(eq=False)
class VectorField:
    """Nodal coefficients of a P1 map U: Omega -> R^N, shape (n_vertices, N)."""

    mesh: TriMesh
    nodal_values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.nodal_values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.mesh.n_vertices:
            raise ValueError(
                f"expected {self.mesh.n_vertices} nodal rows, got {vals.shape[0]}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("nodal values must be finite")
        self.nodal_values = vals

    @property
    def n_components(self) -> int:
        return self.nodal_values.shape[1]

    def copy(self):
        return VectorField(self.mesh, self.nodal_values.copy())

    def gradients(self) -> np.ndarray:
        """(E, N, 2) element-constant gradients; row alpha is D U_alpha."""
        return element_gradients(self.mesh, self.nodal_values)

    def element_gradient(self, k: int) -> np.ndarray:
        _, grads = self.mesh.element_geometry(k)
        return self.nodal_values[self.mesh.triangles[k]].T @ grads

    def __call__(self, points):
        return evaluate(self, points)


def element_gradients(mesh: TriMesh, nodal_values) -> np.ndarray:
    local = np.asarray(nodal_values)[mesh.triangles]  # (E, 3, N)
    return np.einsum("ean,eai->eni", local, mesh.grad_basis)


def _call(f, points):
    vals = np.asarray(f(points[:, 0], points[:, 1]), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    return vals


def interpolate(mesh: TriMesh, f) -> VectorField:
    """Nodal interpolant of ``f(x, y) -> (..., N)`` (vectorised over x, y)."""
    vals = _call(f, mesh.vertices)
    bad = ~np.all(np.isfinite(vals), axis=1)
    if bad.any():
        v = int(np.flatnonzero(bad)[0])
        raise EvaluationError(v, mesh.vertices[v])
    return VectorField(mesh, vals)


def evaluate(field: VectorField, points) -> np.ndarray:
    """Values at arbitrary points of the closed square, shape (n, N) (or (N,) for one point)."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    elem, bary = field.mesh.locate(np.atleast_2d(pts))
    local = field.nodal_values[field.mesh.triangles[elem]]  # (n, 3, N)
    out = np.einsum("na,nac->nc", bary, local)
    return out[0] if single else out


def element_gradient(field: VectorField, k: int) -> np.ndarray:
    return field.element_gradient(k)


_GL5_NODES, _GL5_WEIGHTS = np.polynomial.legendre.leggauss(5)


def l2_project_boundary(mesh: TriMesh, g, n_components=None) -> np.ndarray:
    """L2(boundary) projection of ``g`` onto the P1 trace space.

    Returns an array of shape (len(mesh.boundary_vertices), N), ordered like
    ``mesh.boundary_vertices``.
    """
    bverts = mesh.boundary_vertices
    index = np.full(mesh.n_vertices, -1)
    index[bverts] = np.arange(len(bverts))
    edges = mesh.boundary_edges()
    P0, P1 = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
    length = np.linalg.norm(P1 - P0, axis=1)

    # 1D P1 mass matrix: (L/6) [[2, 1], [1, 2]] per edge
    i, j = index[edges[:, 0]], index[edges[:, 1]]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    data = np.concatenate([length / 3, length / 3, length / 6, length / 6])
    n = len(bverts)
    mass = sp.csc_matrix((data, (rows, cols)), shape=(n, n))

    s = 0.5 * (_GL5_NODES + 1.0)  # nodes on [0, 1]
    pts = P0[:, None, :] + s[None, :, None] * (P1 - P0)[:, None, :]  # (nE, q, 2)
    vals = _call(g, pts.reshape(-1, 2)).reshape(len(edges), len(s), -1)
    w = 0.5 * _GL5_WEIGHTS[None, :] * length[:, None]  # (nE, q)
    rhs_i = np.einsum("eq,q,eqc->ec", w, 1.0 - s, vals)
    rhs_j = np.einsum("eq,q,eqc->ec", w, s, vals)
    N = vals.shape[2] if n_components is None else n_components
    rhs = np.zeros((n, N))
    np.add.at(rhs, i, rhs_i)
    np.add.at(rhs, j, rhs_j)
    out = spsolve(mass, rhs)
    out = np.asarray(out).reshape(n, N)
    assert np.all(np.isfinite(out)), "singular boundary mass matrix"
    return out


def mass_matrix(mesh: TriMesh) -> sp.csr_matrix:
    """Scalar P1 mass matrix."""
    A = mesh.areas
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    data = A[:, None, None] * local[None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((data.ravel(), (rows, cols)), shape=(n, n))


def stiffness_matrix(mesh: TriMesh) -> sp.csr_matrix:
    """Scalar P1 stiffness matrix."""
    G = mesh.grad_basis
    data = mesh.areas[:, None, None] * np.einsum("eai,ebi->eab", G, G)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((data.ravel(), (rows, cols)), shape=(n, n))


def quadrature_points(mesh: TriMesh):
    """Points (E, q, 2), weights (E, q) and barycentric coordinates (q, 3) of the degree-4 rule."""
    P = mesh.vertices[mesh.triangles]
    pts = np.einsum("qa,eai->eqi", TRIANGLE_POINTS, P)
    w = mesh.areas[:, None] * TRIANGLE_WEIGHTS[None, :]
    return pts, w, TRIANGLE_POINTS


def l2_project(mesh: TriMesh, f) -> VectorField:
    """Full-domain L2 projection onto the P1 space."""
    pts, w, bary = quadrature_points(mesh)
    E, q = w.shape
    vals = _call(f, pts.reshape(-1, 2)).reshape(E, q, -1)
    local = np.einsum("eq,qa,eqc->eac", w, bary, vals)
    rhs = np.zeros((mesh.n_vertices, vals.shape[2]))
    np.add.at(rhs, mesh.triangles, local)
    sol = spsolve(mass_matrix(mesh).tocsc(), rhs)
    return VectorField(mesh, np.asarray(sol).reshape(mesh.n_vertices, -1))


def boundary_lift(mesh: TriMesh, g, projection="boundary") -> VectorField:
    """Interpolant of ``g`` with boundary values replaced by their projection.

    ``projection`` is "boundary" (L2 on the boundary, the default), "domain"
    (trace of the full L2 projection) or "interpolate" (plain nodal values).
    """
    field = interpolate(mesh, g)
    b = mesh.boundary_vertices
    if projection == "boundary":
        field.nodal_values[b] = l2_project_boundary(mesh, g, field.n_components)
    elif projection == "domain":
        field.nodal_values[b] = l2_project(mesh, g).nodal_values[b]
    elif projection != "interpolate":
        raise ValueError(f"unknown projection {projection!r}")
    return field


def l2_error(field: VectorField, f) -> float:
    """|| U - f ||_{L2} with a degree-4 rule per element."""
    mesh = field.mesh
    pts, w, bary = quadrature_points(mesh)
    E, q = w.shape
    exact = _call(f, pts.reshape(-1, 2)).reshape(E, q, -1)
    approx = np.einsum("qa,eac->eqc", bary, field.nodal_values[mesh.triangles])
    return float(np.sqrt(np.sum(w * np.sum((approx - exact) ** 2, axis=2))))
