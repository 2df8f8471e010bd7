import numpy as np
import pytest

from infharm.assembly import assemble, energy
from infharm.fespace import VectorField, interpolate
from infharm.mesh import make_structured_mesh
from infharm.problems import affine_problem, make_problem
from infharm.solver import (
    ContinuationError, IndefiniteMatrixError, NonConvergenceError, SolverConfig,
    _pcg, continue_in_p, initial_guess, newton_solve, solve_linear, warm_vs_cold,
)


def zero_interior(field):
    vals = field.nodal_values.copy()
    vals[field.mesh.free_vertices] = 0.0
    return VectorField(field.mesh, vals)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(p_schedule=(3, 4))
    with pytest.raises(ValueError):
        SolverConfig(p_schedule=(2, 4, 4))
    with pytest.raises(ValueError):
        SolverConfig(linear_solver="qr")
    assert SolverConfig(p_schedule=(2.0, 8.0)).p_schedule == (2, 8)


def test_cg_matches_dense_solve(rng):
    mesh = make_structured_mesh(4)
    g = make_problem("mixed2d")
    sys = assemble(zero_interior(interpolate(mesh, g.g)), 2)
    x, its = solve_linear(sys, sys.residual, tol=1e-12, method="cg")
    ref = np.linalg.solve(sys.jacobian.toarray(), sys.residual)
    assert its > 0
    np.testing.assert_allclose(x, ref, atol=1e-9)
    xd, its_d = solve_linear(sys, sys.residual, method="direct")
    assert its_d == 0
    np.testing.assert_allclose(xd, ref, atol=1e-12)


def test_zero_rhs():
    mesh = make_structured_mesh(4)
    sys = assemble(interpolate(mesh, make_problem("rank1").g), 4)
    for method in ("cg", "direct"):
        x, its = solve_linear(sys, np.zeros(len(sys.free_dofs)), method=method)
        assert np.all(x == 0) and its == 0


def test_cg_detects_negative_curvature():
    A = np.diag([1.0, 1.0]) + np.array([[0.0, 3.0], [3.0, 0.0]])
    import scipy.sparse as sp
    with pytest.raises(IndefiniteMatrixError):
        _pcg(sp.csr_matrix(A), np.array([1.0, -1.0]), 1e-10, 50, 10)


def test_cg_at_large_p_records_iterations():
    mesh = make_structured_mesh(8)
    cfg = SolverConfig(p_schedule=(2, 4, 8, 16, 32, 64, 128, 256, 512, 1024))
    state = continue_in_p(make_problem("triple"), mesh, cfg)
    sys = assemble(state.solution, 1024)
    b = np.random.default_rng(1).normal(size=len(sys.free_dofs))
    x, its = solve_linear(sys, b, tol=1e-10, method="cg")
    assert its > 0
    assert np.linalg.norm(sys.jacobian @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_p2_single_step():
    mesh = make_structured_mesh(8)
    U0 = zero_interior(interpolate(mesh, make_problem("mixed2d").g))
    U, rec = newton_solve(U0, 2)
    assert rec.converged and rec.iterations == 1


def perturbed_affine(rng, m=8):
    A, b = rng.normal(size=(2, 2)), rng.normal(size=2)
    prob = affine_problem(A, b)
    mesh = make_structured_mesh(m)
    exact = interpolate(mesh, prob.g)
    vals = exact.nodal_values.copy()
    vals[mesh.free_vertices] += 0.3 * rng.normal(size=(len(mesh.free_vertices), 2))
    return prob, mesh, exact, VectorField(mesh, vals)


@pytest.mark.parametrize("p", [2, 8, 64])
def test_affine_exact_from_random_start(p, rng):
    _, _, exact, start = perturbed_affine(rng)
    U, rec = newton_solve(start, p)
    assert rec.converged
    assert np.abs(U.nodal_values - exact.nodal_values).max() <= 1e-9


def test_affine_exact_by_continuation(rng):
    # a cold random start at p = 1024 underflows every weight but one, so
    # large exponents are reached through the schedule
    prob, mesh, exact, start = perturbed_affine(rng)
    cfg = SolverConfig(p_schedule=(2, 64, 1024))
    sols = {}
    continue_in_p(prob, mesh, cfg, initial=start,
                  callback=lambda st, rec: sols.__setitem__(rec.p, st.solution))
    for p in (2, 64, 1024):
        assert np.abs(sols[p].nodal_values - exact.nodal_values).max() <= 1e-9


def test_energy_monotone_within_newton():
    mesh = make_structured_mesh(32)
    prob = make_problem("mixed2d")
    cfg = SolverConfig(p_schedule=(2, 3, 4, 6))
    U6 = continue_in_p(prob, mesh, cfg).solution
    U, rec = newton_solve(U6, 8, cfg)
    assert rec.converged
    assert np.all(np.diff(rec.log_energies) <= 1e-14)


def test_single_stage_schedule_equals_newton():
    mesh = make_structured_mesh(8)
    prob = make_problem("rank1")
    cfg = SolverConfig(p_schedule=(2,))
    state = continue_in_p(prob, mesh, cfg)
    U, rec = newton_solve(initial_guess(prob, mesh, cfg), 2, cfg)
    np.testing.assert_array_equal(state.solution.nodal_values, U.nodal_values)
    assert state.realized_schedule == [2]


def test_continuation_minimality_and_callback():
    mesh = make_structured_mesh(16)
    prob = make_problem("rank1")
    cfg = SolverConfig(p_schedule=(2, 4, 8, 16, 32))
    lift = initial_guess(prob, mesh, cfg)
    seen = []
    state = continue_in_p(prob, mesh, cfg, callback=lambda st, rec: seen.append(rec.p))
    assert seen == [2, 4, 8, 16, 32] == state.realized_schedule
    for rec in state.history:
        assert rec.converged
    # minimality is checked per stage against the lift
    U = lift
    for p in cfg.p_schedule:
        U, _ = newton_solve(U, p, cfg)
        assert energy(U, p)[1] <= energy(lift, p)[1] + 1e-12


def test_midpoint_insertion():
    mesh = make_structured_mesh(8)
    prob = make_problem("rank1")
    # a tight iteration budget forces the jump 2 -> 64 to be split
    cfg = SolverConfig(p_schedule=(2, 64), newton_max_iter=8)
    state = continue_in_p(prob, mesh, cfg)
    assert state.realized_schedule[0] == 2 and state.realized_schedule[-1] == 64
    assert len(state.realized_schedule) > 2
    inserted = [rec.p for rec in state.history if rec.inserted]
    assert inserted and all(2 < p < 64 for p in inserted)


def test_continuation_failure_keeps_history():
    mesh = make_structured_mesh(8)
    cfg = SolverConfig(p_schedule=(2, 1024), newton_max_iter=2, max_insertions=1)
    with pytest.raises(ContinuationError) as info:
        continue_in_p(make_problem("mixed2d"), mesh, cfg)
    state = info.value.state
    assert state.failed_p is not None
    assert state.realized_schedule[0] == 2


def test_nonconvergence_carries_best():
    mesh = make_structured_mesh(8)
    U0 = initial_guess(make_problem("mixed2d"), mesh)
    with pytest.raises(NonConvergenceError) as info:
        newton_solve(U0, 200, SolverConfig(newton_max_iter=1))
    assert isinstance(info.value.best, VectorField)
    assert info.value.record.p == 200


def test_warm_start_not_worse():
    mesh = make_structured_mesh(16)
    prob = make_problem("mixed2d")
    cfg = SolverConfig(p_schedule=(2, 4, 8, 16, 32, 45))
    warm = continue_in_p(prob, mesh, cfg).solution
    w, c = warm_vs_cold(prob, mesh, warm, 64, cfg)
    assert c is None or w <= c


def test_refinement_trend_mixed2d():
    prob = make_problem("mixed2d")
    cfg = SolverConfig(p_schedule=(2, 4, 8, 16, 32, 64))
    sols = {m: continue_in_p(prob, make_structured_mesh(m), cfg).solution for m in (16, 32, 64)}
    from infharm.fespace import evaluate
    coarse = lambda a, b: np.abs(sols[a].nodal_values - evaluate(sols[b], sols[a].mesh.vertices)).max()
    assert coarse(32, 64) <= coarse(16, 32)
