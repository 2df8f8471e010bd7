"""Residual, Jacobian and energy of the Galerkin p-Laplace system.

Everything is normalised by M^(p-2), M being the largest regularised
element gradient norm, so element weights (n_K / M)^(p-2) lie in [0, 1]
and nothing overflows at p ~ 1000. The zero set and Newton directions are
those of the unnormalised system.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .fespace import VectorField, element_gradients


class IterateError(FloatingPointError):
    """Non-finite gradient norms: the iterate is corrupted."""


@dataclass(eq=False)
class NonlinearSystem:
    p: float
    epsilon: float
    scale_M: float
    free_dofs: np.ndarray
    residual: np.ndarray
    jacobian: sp.csr_matrix | None
    log_weights: np.ndarray  # per element, log (n_K / M)^(p-2)
    full_residual: np.ndarray  # all dofs, boundary rows included
    residual_scale: float = 0.0  # norm of the residual assembled from |contributions|

    @property
    def roundoff_floor(self) -> float:
        """Residual norm below which rounding error dominates.

        Each weight (n_K / M)^(p-2) carries a relative error of about
        (p - 2) eps on top of the cancellation in the element sums.
        """
        return max(100.0, 10.0 * (self.p - 1.0)) * np.finfo(float).eps * self.residual_scale

    @property
    def log_residual_norm(self) -> float:
        """log of the unnormalised residual norm."""
        nrm = np.linalg.norm(self.residual)
        if nrm == 0.0:
            return -np.inf
        return float(np.log(nrm) + (self.p - 2.0) * np.log(self.scale_M))


def regularized_norm(G, epsilon=0.0):
    """sqrt(|G|_F^2 + epsilon^2); batched over leading axes of an (..., N, 2) array."""
    G = np.asarray(G, dtype=float)
    return np.sqrt(np.sum(G * G, axis=(-2, -1)) + epsilon * epsilon)


def free_dofs(mesh, N) -> np.ndarray:
    """Interior dofs in vertex-major, component-minor numbering."""
    return (mesh.free_vertices[:, None] * N + np.arange(N)[None, :]).ravel()


def _check_p(p):
    if not p >= 2:
        raise ValueError(f"exponent p must be >= 2, got {p}")


def _norms(G, epsilon):
    n = regularized_norm(G, epsilon)
    if not np.all(np.isfinite(n)):
        raise IterateError("non-finite element gradient norm")
    return n


def _load_vector(mesh, load, N):
    # edge-midpoint rule, exact for quadratic integrands
    P = mesh.vertices[mesh.triangles]
    mids = 0.5 * (P[:, [0, 1, 2]] + P[:, [1, 2, 0]])  # midpoints of edges 01, 12, 20
    vals = np.asarray(load(mids[..., 0].ravel(), mids[..., 1].ravel()), dtype=float)
    vals = vals.reshape(mesh.n_elements, 3, N)
    # hat function a is 1/2 at the two midpoints of edges touching a, 0 at the third
    touch = np.array([[1, 0, 1], [1, 1, 0], [0, 1, 1]]) * 0.5  # [vertex, midpoint]
    local = np.einsum("am,emc->eac", touch, vals) * (mesh.areas / 3.0)[:, None, None]
    out = np.zeros((mesh.n_vertices, N))
    np.add.at(out, mesh.triangles, local)
    return out.ravel()


def assemble(field: VectorField, p, epsilon=1e-10, load=None, jacobian=True) -> NonlinearSystem:
    """Normalised residual and Jacobian on the interior dofs.

    ``load`` is an optional right-hand side f(x, y) -> R^N, subtracted as
    int f . Phi; the experiments never use it.
    """
    _check_p(p)
    mesh = field.mesh
    N = field.n_components
    G = element_gradients(mesh, field.nodal_values)  # (E, N, 2)
    n = _norms(G, epsilon)
    M = float(n.max())
    if M == 0.0:
        # zero field with epsilon = 0: every weight is 0^(p-2) (or 1 when p == 2)
        M = 1.0
    with np.errstate(divide="ignore"):
        log_w = (p - 2.0) * (np.log(n) - np.log(M))
    w = np.exp(log_w) if p != 2 else np.ones_like(n)

    grads = mesh.grad_basis  # (E, 3, 2)
    A = mesh.areas
    v = np.einsum("eni,eai->ean", G, grads)  # G_alpha . grad phi_a
    local_res = (w * A)[:, None, None] * v  # (E, 3, N)
    full_res = np.zeros((mesh.n_vertices, N))
    np.add.at(full_res, mesh.triangles, local_res)
    full_res = full_res.ravel()
    abs_res = np.zeros((mesh.n_vertices, N))
    np.add.at(abs_res, mesh.triangles, np.abs(local_res))
    if load is not None:
        full_res = full_res - _load_vector(mesh, load, N) * np.exp(-(p - 2.0) * np.log(M))
    fdofs = free_dofs(mesh, N)

    J = None
    if jacobian:
        E = mesh.n_elements
        gg = np.einsum("eai,ebi->eab", grads, grads)
        eye = np.eye(N)
        H = (w * A)[:, None, None, None, None] * gg[:, :, None, :, None] * eye[None, None, :, None, :]
        if p != 2:
            with np.errstate(divide="ignore", invalid="ignore"):
                c = np.where(n > 0, (p - 2.0) * w * A / (n * n), 0.0)
            H = H + c[:, None, None, None, None] * v[:, :, :, None, None] * v[:, None, None, :, :]
        H = H.reshape(E, 3 * N, 3 * N)
        ldofs = (mesh.triangles[:, :, None] * N + np.arange(N)[None, None, :]).reshape(E, 3 * N)
        rows = np.repeat(ldofs, 3 * N, axis=1).ravel()
        cols = np.tile(ldofs, (1, 3 * N)).ravel()
        ndof = mesh.n_vertices * N
        full = sp.csr_matrix((H.ravel(), (rows, cols)), shape=(ndof, ndof))
        J = full[fdofs][:, fdofs].tocsr()

    return NonlinearSystem(
        p=float(p), epsilon=float(epsilon), scale_M=M, free_dofs=fdofs,
        residual=full_res[fdofs], jacobian=J, log_weights=log_w, full_residual=full_res,
        residual_scale=float(np.linalg.norm(abs_res.ravel()[fdofs])),
    )


def energy(field: VectorField, p, epsilon=1e-10):
    """(log sum_K |K| n_K^p, (sum_K |K| n_K^p)^(1/p)), evaluated in log space."""
    _check_p(p)
    G = element_gradients(field.mesh, field.nodal_values)
    return energy_from_gradients(G, field.mesh.areas, p, epsilon)


def energy_from_gradients(G, areas, p, epsilon=1e-10):
    n = _norms(G, epsilon)
    M = n.max()
    if M == 0.0:
        return -np.inf, 0.0
    log_e = p * np.log(M) + np.log(np.sum(areas * (n / M) ** p))
    return float(log_e), float(np.exp(log_e / p))


def log_energy_change(G, dG, t, areas, p, epsilon=1e-10):
    """log E(U + t dU) - log E(U), accurate even when the change is tiny.

    Per element n_new^2 - n^2 = 2 t G:dG + t^2 |dG|^2 is formed directly, so
    the difference does not suffer from cancellation between two large
    log-energies.
    """
    n2 = np.sum(G * G, axis=(1, 2)) + epsilon * epsilon
    delta = 2.0 * t * np.sum(G * dG, axis=(1, 2)) + t * t * np.sum(dG * dG, axis=(1, 2))
    with np.errstate(divide="ignore"):
        log_n = 0.5 * np.log(n2)
    log_M = log_n.max()
    base = areas * np.exp(p * (log_n - log_M))
    S = base.sum()
    ratio = delta / n2
    if np.any(ratio <= -1.0):
        # a gradient norm collapses to zero; fall back to direct evaluation
        new = energy_from_gradients(G + t * dG, areas, p, epsilon)[0]
        old = energy_from_gradients(G, areas, p, epsilon)[0]
        return new - old
    expo = 0.5 * p * np.log1p(ratio)
    if expo.max() > 1.0:
        # large increase: expm1 would overflow, and there is no cancellation to avoid
        with np.errstate(divide="ignore"):
            return float(logsumexp(np.log(base) + expo) - np.log(S))
    change = np.sum(base * np.expm1(expo))
    return float(np.log1p(change / S)) if change / S > -1 else -np.inf


def log_energy_slope(G, dG, areas, p, epsilon=1e-10):
    """d/dt log E(U + t dU) at t = 0."""
    n2 = np.sum(G * G, axis=(1, 2)) + epsilon * epsilon
    with np.errstate(divide="ignore"):
        log_n = 0.5 * np.log(n2)
    base = areas * np.exp(p * (log_n - log_n.max()))
    with np.errstate(divide="ignore", invalid="ignore"):
        dot = np.where(n2 > 0, np.sum(G * dG, axis=(1, 2)) / n2, 0.0)
    return float(p * np.sum(base * dot) / base.sum())


def dense_unnormalised_residual(field: VectorField, p, epsilon=1e-10):
    """Residual without normalisation (overflows for large p); a reference for tests."""
    mesh = field.mesh
    G = element_gradients(mesh, field.nodal_values)
    n = regularized_norm(G, epsilon)
    v = np.einsum("eni,eai->ean", G, mesh.grad_basis)
    local = (n ** (p - 2.0) * mesh.areas)[:, None, None] * v
    out = np.zeros((mesh.n_vertices, field.n_components))
    np.add.at(out, mesh.triangles, local)
    return out.ravel()[free_dofs(mesh, field.n_components)]
