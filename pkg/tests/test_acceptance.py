"""Acceptance criteria 1 to 11.

Each test records one PASS/FAIL line; they are printed in the terminal
summary (see conftest.py) and when this file is run as a script.
The m = 64 continuation runs are shared between criteria.
"""

import functools
import math
import time

import numpy as np
import pytest

from infharm import io
from infharm.analysis import (
    contour_extract, det_field, infinity_residuals, mean_over_box, ortho_projection,
    rank_classify, sigma2_integral,
)
from infharm.assembly import assemble, energy, free_dofs
from infharm.fespace import VectorField, interpolate, l2_error
from infharm.mesh import make_structured_mesh
from infharm.problems import TRIPLE, ExactMap, ProblemSpec, affine_problem, make_problem
from infharm.solver import DEFAULT_SCHEDULE, SolverConfig, continue_in_p, initial_guess

RESULTS = []
M = 64


def record(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] A{criterion}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def full_run(experiment, m=M, schedule=DEFAULT_SCHEDULE):
    """Continuation with every stage kept; also checks finiteness per stage."""
    mesh = make_structured_mesh(m)
    cfg = SolverConfig(p_schedule=schedule)
    stages, finite = {}, []

    def keep(state, rec):
        U = state.solution
        sys = assemble(U, rec.p, cfg.epsilon)
        finite.append(bool(np.all(np.isfinite(U.nodal_values)) and np.all(np.isfinite(sys.residual))
                           and np.all(np.isfinite(sys.jacobian.data))
                           and np.all(np.isfinite(rec.residual_norms))))
        stages[rec.p] = (U, rec)

    t0 = time.perf_counter()
    state = continue_in_p(make_problem(experiment), mesh, cfg, callback=keep)
    return mesh, cfg, stages, state, all(finite), time.perf_counter() - t0


def test_a1_affine_exactness():
    rng = np.random.default_rng(1)
    A, b = rng.normal(size=(2, 2)), rng.normal(size=2)
    prob = affine_problem(A, b)
    mesh = make_structured_mesh(16)
    exact = interpolate(mesh, prob.g).nodal_values
    errs = {}
    continue_in_p(prob, mesh, SolverConfig(p_schedule=(2, 64, 1024)),
                  callback=lambda st, rec: errs.__setitem__(rec.p, np.abs(st.solution.nodal_values - exact).max()))
    ok = set(errs) == {2, 64, 1024} and max(errs.values()) <= 1e-9
    record(1, ok, "affine sup errors " + ", ".join(f"p={p}: {e:.1e}" for p, e in errs.items()) + " (<= 1e-9)")
    assert ok


def test_a2_p2_manufactured_convergence():
    f = lambda x, y: np.stack([x * x - y * y, x * y], axis=-1)
    prob = ProblemSpec("custom", 2, f)
    errs = []
    for m in (8, 16, 32, 64):
        mesh = make_structured_mesh(m)
        U = continue_in_p(prob, mesh, SolverConfig(p_schedule=(2,))).solution
        errs.append(l2_error(U, f))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = all(3.6 <= r <= 4.4 for r in ratios)
    record(2, ok, "L2 error ratios " + ", ".join(f"{r:.3f}" for r in ratios) + " (in [3.6, 4.4])")
    assert ok


@pytest.mark.parametrize("experiment", ["mixed2d", "mixed3d", "rank1", "triple", "box"])
def test_a3_discrete_minimality(experiment):
    mesh, cfg, stages, state, _, _ = full_run(experiment)
    lift = initial_guess(make_problem(experiment), mesh, cfg)
    gaps = {p: energy(U, p, cfg.epsilon)[1] - energy(lift, p, cfg.epsilon)[1] for p, (U, _) in stages.items()}
    worst = max(gaps, key=gaps.get)
    ok = all(g <= 1e-12 for g in gaps.values()) and state.failed_p is None
    record(3, ok, f"{experiment}: {len(gaps)} stages, max E_p(U) - E_p(lift) = {gaps[worst]:.3e} at p={worst:g} (<= 1e-12)")
    assert ok


def omega1(experiment, ps):
    _, _, stages, _, _, _ = full_run(experiment)
    return [rank_classify(stages[p][0], tau=0.05).omega1_area for p in ps]


def test_a4_mixed2d_omega1_decreases():
    ps = (2, 8, 64, 256)
    areas = omega1("mixed2d", ps)
    ok = all(b < a for a, b in zip(areas, areas[1:]))
    record(4, ok, "mixed2d omega1 " + ", ".join(f"p={p}: {a:.6f}" for p, a in zip(ps, areas))
           + " (strictly decreasing)")
    assert ok


def test_a5_rank1_omega1_increases():
    ps = (2, 8, 64, 256)
    areas = omega1("rank1", ps)
    ok = all(b > a for a, b in zip(areas, areas[1:]))
    record(5, ok, "rank1 omega1 " + ", ".join(f"p={p}: {a:.4f}" for p, a in zip(ps, areas)) + " (strictly increasing)")
    assert ok


def test_a6_rank1_flattening():
    _, _, stages, _, _, _ = full_run("rank1")
    s2, s256 = sigma2_integral(stages[2][0]), sigma2_integral(stages[256][0])
    ok = s256 <= 0.5 * s2
    record(6, ok, f"int sigma2: p=2 {s2:.4f}, p=256 {s256:.4f}, factor {s256 / s2:.3f} (<= 0.5)")
    assert ok


def test_a7_triple_oracle_distance():
    mesh, _, stages, _, _, _ = full_run("triple")
    oracle = ExactMap(TRIPLE, 1e-12, 0.75)(mesh.vertices[:, 0], mesh.vertices[:, 1])
    ps = (8, 64, 256, 512, 1024)
    d = [np.abs(stages[p][0].nodal_values - oracle).max() for p in ps]
    ok = all(b <= a for a, b in zip(d, d[1:])) and d[-1] <= 0.05
    record(7, ok, "sup distance to oracle " + ", ".join(f"p={p}: {v:.4f}" for p, v in zip(ps, d))
           + " (non-increasing, last <= 0.05)")
    assert ok


def test_a8_interface_geometry():
    _, _, stages, _, _, _ = full_run("triple")
    U = stages[1024][0]
    det = det_field(U)
    ll = mean_over_box(U, np.abs(det), (-0.9, -0.5), (-0.9, -0.5))
    lr = mean_over_box(U, det, (0.5, 0.9), (-0.9, -0.5))
    ok = ll <= 0.02 and lr >= 0.1
    record(8, ok, f"p=1024 mean |det| lower-left {ll:.5f} (<= 0.02), mean det lower-right {lr:.4f} (>= 0.1)")
    assert ok


def test_a9_infinity_residual_decay():
    ex = ExactMap(TRIPLE, 1e-12, 0.75)
    tang, norm = [], []
    for m in (32, 64, 128):
        t, n = infinity_residuals(interpolate(make_structured_mesh(m), ex))
        tang.append(t.max())
        norm.append(n.max())
    # the normal part vanishes identically (Du is full rank or its complement
    # is annihilated), so it can only stay at its limit 0
    ok = all(b < a for a, b in zip(tang, tang[1:])) and all(b <= a for a, b in zip(norm, norm[1:]))
    record(9, ok, "max tangential " + ", ".join(f"{v:.6f}" for v in tang)
           + "; max normal " + ", ".join(f"{v:.1e}" for v in norm) + " over m = 32, 64, 128")
    assert ok


def test_a10_numerics_safety():
    _, _, stages, state, finite, seconds = full_run("mixed2d")
    ok = finite and state.p_current == 1024 and seconds <= 600
    record(10, ok, f"mixed2d to p={state.p_current:g} on m=64: all finite={finite}, {seconds:.1f} s (<= 600 s)")
    assert ok


def test_a11_property_suites(tmp_path):
    rng = np.random.default_rng(11)
    # Jacobian against finite differences
    mesh = make_structured_mesh(6)
    base = interpolate(mesh, make_problem("mixed2d").g).nodal_values
    fd_err = 0.0
    for p in (2, 7, 64):
        U = VectorField(mesh, base + 0.1 * rng.normal(size=base.shape))
        sys = assemble(U, p)
        dofs = free_dofs(mesh, 2)
        V = rng.normal(size=len(dofs))

        def res(sign):
            vals = U.nodal_values.ravel().copy()
            vals[dofs] += sign * 1e-6 * V
            s = assemble(VectorField(mesh, vals.reshape(base.shape)), p, jacobian=False)
            return s.residual * (s.scale_M / sys.scale_M) ** (p - 2)

        JV = sys.jacobian @ V
        fd_err = max(fd_err, np.linalg.norm((res(1) - res(-1)) / 2e-6 - JV) / np.linalg.norm(JV))
    # projections
    proj_err = 0.0
    for k in range(1000):
        N = 2 + k % 2
        G = rng.normal(size=(N, 2)) if k % 3 else np.outer(rng.normal(size=N), rng.normal(size=2))
        P = ortho_projection(G)
        proj_err = max(proj_err, np.abs(P @ P - P).max(), np.abs(P - P.T).max(), np.abs(P @ G).max())
    # contour vertices on their level
    m16 = make_structured_mesh(16)
    vals = rng.normal(size=m16.n_vertices)
    f = VectorField(m16, vals[:, None])
    lvl_err = max(np.abs(f(c.points)[:, 0] - c.level).max()
                  for c in contour_extract(m16, vals, np.linspace(-1, 1, 9)))
    # checkpoint round trip
    X = rng.normal(size=(m16.n_vertices, 3))
    io.write_checkpoint(tmp_path / "c.bin", X, experiment="mixed3d")
    exact = io.read_checkpoint(tmp_path / "c.bin")[1].tobytes() == X.tobytes()
    ok = fd_err <= 1e-5 and proj_err <= 1e-10 and lvl_err <= 1e-10 and exact
    record(11, ok, f"FD Jacobian {fd_err:.1e} (<= 1e-5), projector {proj_err:.1e} (<= 1e-10), "
                   f"contour level {lvl_err:.1e} (<= 1e-10), checkpoint bit-exact={exact}")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
