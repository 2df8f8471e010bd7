"""Damped Newton for one exponent and continuation in p."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import (
    NonlinearSystem, assemble, energy, log_energy_change, log_energy_slope,
)
from .fespace import VectorField, boundary_lift, element_gradients

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (2, 3, 4, 5, 6, 8, 11, 16, 22, 32, 45, 64, 90, 128, 181, 256, 362, 512, 724, 1024)


class SolverError(RuntimeError):
    pass


class IndefiniteMatrixError(SolverError):
    """CG met non-positive curvature; epsilon is probably too small."""


class NonConvergenceError(SolverError):
    def __init__(self, message, best, record):
        super().__init__(message)
        self.best = best
        self.record = record


class ContinuationError(SolverError):
    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass
class SolverConfig:
    p_schedule: tuple = DEFAULT_SCHEDULE
    newton_tol: float = 1e-8
    newton_abs_tol: float = 1e-14
    newton_max_iter: int = 50
    shrink: float = 0.5
    min_step: float = 2.0 ** -20
    armijo: float = 1e-4
    max_expand: float = 1024.0  # largest step length tried beyond the full Newton step
    linear_tol: float = 1e-10
    linear_solver: str = "direct"  # or "cg"
    epsilon: float = 1e-10
    max_insertions: int = 4
    projection: str = "boundary"

    def __post_init__(self):
        sched = tuple(float(p) for p in self.p_schedule)
        if not sched or sched[0] != 2.0:
            raise ValueError("p_schedule must start at 2")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("p_schedule must be strictly increasing")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        self.p_schedule = tuple(int(p) if p.is_integer() else p for p in sched)


@dataclass
class NewtonRecord:
    p: float
    iterations: int = 0
    converged: bool = False
    residual_norms: list = field(default_factory=list)  # normalised ||F|| per iterate
    log_energies: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    energy_root: float = float("nan")
    inserted: bool = False

    @property
    def final_residual(self) -> float:
        return self.residual_norms[-1] if self.residual_norms else float("nan")

    @property
    def log_energy(self) -> float:
        return self.log_energies[-1] if self.log_energies else float("nan")


@dataclass
class ContinuationState:
    p_current: float | None = None
    solution: VectorField | None = None
    history: list = field(default_factory=list)
    failed_p: float | None = None

    @property
    def realized_schedule(self) -> list:
        return [rec.p for rec in self.history]


def _pcg(A, b, tol, maxiter, window):
    """Jacobi-preconditioned CG; returns (x, iterations, converged)."""
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise IndefiniteMatrixError("non-positive diagonal entry in the Jacobian")
    dinv = 1.0 / diag
    x = np.zeros_like(b)
    r = b.copy()
    z = dinv * r
    d = z.copy()
    rz = r @ z
    nb = np.linalg.norm(b)
    best, best_at = np.inf, 0
    for it in range(1, maxiter + 1):
        Ad = A @ d
        curv = d @ Ad
        if curv <= 0:
            raise IndefiniteMatrixError(
                f"negative curvature {curv:.3e} in CG; increase epsilon"
            )
        alpha = rz / curv
        x += alpha * d
        r -= alpha * Ad
        rn = np.linalg.norm(r)
        if rn <= tol * nb:
            return x, it, True
        if rn < 0.5 * best:
            best, best_at = rn, it
        elif it - best_at > window:
            return x, it, False
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    return x, maxiter, False


def solve_linear(system: NonlinearSystem, rhs, tol=1e-10, method="cg"):
    """Solve J x = rhs on the free dofs.

    ``method="cg"`` runs Jacobi-preconditioned CG and falls back to a sparse
    LU factorisation when CG stagnates (no halving of the residual within
    10 sqrt(n) iterations). ``method="direct"`` goes straight to LU. Returns
    (x, cg_iterations) with cg_iterations = 0 for a direct solve.
    """
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return np.zeros_like(rhs), 0
    J = system.jacobian
    its = 0
    if method == "cg":
        n = len(rhs)
        window = int(10 * math.sqrt(n)) + 1
        x, its, ok = _pcg(J, rhs, tol, maxiter=10 * n, window=window)
        if ok:
            return x, its
        log.debug("CG stagnated after %d iterations; switching to LU", its)
    elif method != "direct":
        raise ValueError(f"unknown linear solver {method!r}")
    x = splu(sp.csc_matrix(J)).solve(rhs)
    return x, its


def _full_vector(system, d, mesh, N):
    full = np.zeros(mesh.n_vertices * N)
    full[system.free_dofs] = d
    return full.reshape(mesh.n_vertices, N)


def newton_solve(initial: VectorField, p, config: SolverConfig | None = None):
    """Minimise the p-energy from ``initial`` with Newton and Armijo backtracking.

    Boundary nodal values of ``initial`` are kept. Stops when the normalised
    residual drops below ``newton_tol`` times the starting one, below
    ``newton_abs_tol``, or below the roundoff floor of the assembly.
    """
    cfg = config or SolverConfig()
    mesh, N = initial.mesh, initial.n_components
    eps = cfg.epsilon
    U = initial.copy()
    rec = NewtonRecord(p=p)
    system = assemble(U, p, eps)
    f0 = float(np.linalg.norm(system.residual))
    rec.log_energies.append(energy(U, p, eps)[0])

    for it in range(cfg.newton_max_iter + 1):
        fnorm = float(np.linalg.norm(system.residual))
        rec.residual_norms.append(fnorm)
        if fnorm <= max(cfg.newton_abs_tol, system.roundoff_floor, cfg.newton_tol * f0):
            rec.iterations = it
            rec.converged = True
            rec.energy_root = math.exp(rec.log_energies[-1] / p)
            return U, rec
        if it == cfg.newton_max_iter:
            break

        d, lin_its = solve_linear(system, -system.residual, cfg.linear_tol, cfg.linear_solver)
        rec.linear_iterations.append(lin_its)
        D = _full_vector(system, d, mesh, N)
        G = element_gradients(mesh, U.nodal_values)
        dG = element_gradients(mesh, D)
        slope = log_energy_slope(G, dG, mesh.areas, p, eps)
        if not (slope <= 0 and np.all(np.isfinite(dG))):
            # J is not positive definite along d, or numerically singular
            # because weights underflowed; use steepest descent instead
            d = -system.residual
            D = _full_vector(system, d, mesh, N)
            dG = element_gradients(mesh, D)
            slope = log_energy_slope(G, dG, mesh.areas, p, eps)
        t = 1.0
        while True:
            change = log_energy_change(G, dG, t, mesh.areas, p, eps)
            if change <= cfg.armijo * t * slope:
                break
            t *= cfg.shrink
            if t < cfg.min_step:
                rec.iterations = it
                raise NonConvergenceError(
                    f"line search failed at p={p}, iteration {it}", U, rec
                )
        if t == 1.0:
            # far from the minimiser Newton on a degree-p energy only removes
            # about 1/(p-1) of the error per step; try longer steps
            while t < cfg.max_expand:
                trial = log_energy_change(G, dG, 2.0 * t, mesh.areas, p, eps)
                if not trial < change:
                    break
                t, change = 2.0 * t, trial
        U = VectorField(mesh, U.nodal_values + t * D)
        rec.steps.append(t)
        rec.log_energies.append(rec.log_energies[-1] + change)
        system = assemble(U, p, eps)

    rec.iterations = cfg.newton_max_iter
    raise NonConvergenceError(
        f"Newton did not converge at p={p} within {cfg.newton_max_iter} iterations", U, rec
    )


def initial_guess(problem, mesh, config: SolverConfig | None = None) -> VectorField:
    """Interpolant of the boundary datum with projected boundary values."""
    cfg = config or SolverConfig()
    return boundary_lift(mesh, problem.g, cfg.projection)


def continue_in_p(problem, mesh, config: SolverConfig | None = None, initial=None, callback=None):
    """Solve the whole p schedule, warm-starting each stage from the last.

    If Newton fails at some p, the geometric midpoint with the previous
    exponent is solved first (recursively, at most ``max_insertions``
    levels deep). ``callback(state, record)`` runs after every converged
    stage, including inserted ones.
    """
    cfg = config or SolverConfig()
    state = ContinuationState()
    U0 = initial if initial is not None else initial_guess(problem, mesh, cfg)

    def accept(U, rec, inserted):
        rec.inserted = inserted
        state.p_current = rec.p
        state.solution = U
        state.history.append(rec)
        log.info("p=%g converged in %d Newton steps, E_p=%.6g", rec.p, rec.iterations, rec.energy_root)
        if callback is not None:
            callback(state, rec)
        return U

    def reach(U, p_prev, p, depth, inserted):
        try:
            V, rec = newton_solve(U, p, cfg)
        except NonConvergenceError as err:
            if p_prev is None or depth >= cfg.max_insertions:
                state.failed_p = p
                raise ContinuationError(f"continuation failed at p={p}: {err}", state) from err
            p_mid = math.sqrt(p_prev * p)
            log.warning("p=%g failed; inserting p=%g", p, p_mid)
            U = reach(U, p_prev, p_mid, depth + 1, True)
            return reach(U, p_mid, p, depth + 1, inserted)
        return accept(V, rec, inserted)

    U, p_prev = U0, None
    for p in cfg.p_schedule:
        U = reach(U, p_prev, p, 0, False)
        p_prev = p
    return state


def warm_vs_cold(problem, mesh, warm_start: VectorField, p, config: SolverConfig | None = None):
    """Newton iteration counts at ``p`` from a warm start and from the cold lift.

    A failed cold start is reported as None.
    """
    cfg = config or SolverConfig()
    _, warm = newton_solve(warm_start, p, cfg)
    try:
        _, cold = newton_solve(initial_guess(problem, mesh, cfg), p, cfg)
        cold_its = cold.iterations
    except NonConvergenceError:
        cold_its = None
    return warm.iterations, cold_its
