import dataclasses

import numpy as np
import pytest

from poromor.fom import (StateVector, StepSystem, TimeGrid, dual_step,
                         evaluate_goal, primal_step, run_dual_fom,
                         run_primal_fom, Trajectory)
from poromor.problems import build_problem, footing_spec, mandel_spec


def zero_traction_ops():
    spec = mandel_spec(cells=(2, 1), steps=4)
    spec.material = dataclasses.replace(spec.material, traction_magnitude=0.0)
    return build_problem(spec)


def test_time_grid():
    grid = TimeGrid(t_end=5.0e6, num_elements=5000)
    assert grid.k == pytest.approx(1000.0)
    assert grid.times()[0] == 0.0
    assert grid.times()[-1] == pytest.approx(5.0e6)
    with pytest.raises(ValueError):
        TimeGrid(t_end=-1.0, num_elements=3)


def test_zero_traction_stays_zero():
    ops, grid = zero_traction_ops()
    traj = run_primal_fom(ops, grid)
    assert np.abs(traj.U).max() == 0.0
    assert np.abs(traj.P).max() == 0.0


def test_single_cell_step_matches_dense_oracle():
    spec = mandel_spec(cells=(1, 1), steps=1)
    ops, grid = build_problem(spec)
    state = primal_step(ops, StateVector(np.zeros(ops.n_u), np.zeros(ops.n_p), 0),
                        grid.k)
    # dense monolithic solve assembled independently of StepSystem
    flow = (ops.M_pp + grid.k * ops.K_pp).toarray()
    S = np.block([[ops.A_uu.toarray(), ops.C_up.toarray()],
                  [ops.D_pu.toarray(), flow]])
    rhs = np.concatenate([ops.f_traction, np.zeros(ops.n_p)])
    x = np.linalg.solve(S, rhs)
    np.testing.assert_allclose(np.concatenate([state.u, state.p]), x,
                               rtol=1e-9, atol=1e-12 * np.abs(x).max())


def test_zero_elements_trajectory():
    ops, grid = build_problem(mandel_spec(cells=(2, 1), steps=1))
    traj = run_primal_fom(ops, TimeGrid(t_end=1.0, num_elements=0))
    assert len(traj) == 1
    assert np.abs(traj.U).max() == 0.0


def test_direct_runs_bitwise_reproducible(mandel_small):
    _, ops, grid = mandel_small
    a = run_primal_fom(ops, grid)
    b = run_primal_fom(ops, grid)
    assert np.array_equal(a.U, b.U)
    assert np.array_equal(a.P, b.P)
    assert np.array_equal(a.goal_series, b.goal_series)


def test_dual_matrix_is_exact_transpose(mandel_small, footing_tiny):
    for _, ops, grid in (mandel_small, footing_tiny):
        from poromor.linsolve import LinearSolverConfig, SolverMethod

        system = StepSystem(ops, grid.k,
                            LinearSolverConfig(method=SolverMethod.GMRES))
        diff = system.dual_matrix - system.matrix.T
        assert (abs(diff).max() if diff.nnz else 0.0) <= 1e-12


def test_dual_zero_goal_zero_trajectory(mandel_small):
    _, ops, grid = mandel_small
    silent = dataclasses.replace(ops, g_goal=np.zeros(ops.n_p))
    traj = run_dual_fom(silent, grid)
    assert np.abs(traj.U).max() == 0.0
    assert np.abs(traj.P).max() == 0.0


def test_dual_terminal_condition_zero(mandel_small):
    _, ops, grid = mandel_small
    traj = run_dual_fom(ops, grid)
    assert np.abs(traj.U[-1]).max() == 0.0
    assert np.abs(traj.P[-1]).max() == 0.0
    assert np.abs(traj.P[0]).max() > 0.0


def test_dual_independent_of_traction(mandel_small):
    # linear goal: the adjoint never sees the load
    spec, ops, grid = mandel_small
    spec2 = mandel_spec(cells=(4, 2), steps=20)
    spec2.material = dataclasses.replace(spec2.material,
                                         traction_magnitude=3.3e7)
    ops2, _ = build_problem(spec2)
    a = run_dual_fom(ops, grid)
    b = run_dual_fom(ops2, grid)
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.P, b.P)


def test_dual_single_element():
    ops, _ = build_problem(mandel_spec(cells=(2, 1), steps=1))
    grid = TimeGrid(t_end=1000.0, num_elements=1)
    traj = run_dual_fom(ops, grid)
    assert len(traj) == 2
    assert np.abs(traj.P[0]).max() > 0.0


def test_dual_step_function(mandel_small):
    _, ops, grid = mandel_small
    terminal = StateVector(np.zeros(ops.n_u), np.zeros(ops.n_p), grid.num_elements)
    state = dual_step(ops, terminal, grid.k)
    full = run_dual_fom(ops, grid)
    np.testing.assert_allclose(state.p, full.P[grid.num_elements - 1],
                               rtol=1e-12, atol=0)


def test_evaluate_goal_examples(mandel_small):
    _, ops, grid = mandel_small
    M = grid.num_elements
    # constant p == 1: J = |Gamma_bottom| * T
    ones = Trajectory(np.zeros((M + 1, ops.n_u)), np.ones((M + 1, ops.n_p)),
                      "primal")
    J = evaluate_goal(ones, grid, ops.g_goal)
    # the goal vector is zeroed on the constrained right-edge dof
    expected_measure = ops.g_goal.sum()
    assert J == pytest.approx(expected_measure * 5.0e6, rel=1e-12)

    zero = Trajectory(np.zeros((M + 1, ops.n_u)), np.zeros((M + 1, ops.n_p)),
                      "primal")
    assert evaluate_goal(zero, grid, ops.g_goal) == 0.0


def test_evaluate_goal_hand_example():
    grid = TimeGrid(t_end=2.0, num_elements=1)
    traj = Trajectory(np.zeros((2, 0)), np.array([[0.0], [3.0]]), "primal")
    assert evaluate_goal(traj, grid, np.array([1.0])) == pytest.approx(6.0)


def test_fom_residual_orthogonality(mandel_small):
    # the FOM trajectory satisfies its step equations to solver tolerance,
    # measured against the natural row scales of the system
    _, ops, grid = mandel_small
    system = StepSystem(ops, grid.k)
    traj = run_primal_fom(ops, grid)
    scale = abs(system.matrix).max()
    for m in range(1, grid.num_elements + 1):
        rhs = system.primal_rhs(np.asarray(traj.U[m - 1], dtype=float),
                                np.asarray(traj.P[m - 1], dtype=float))
        x = np.concatenate([traj.U[m], traj.P[m]]).astype(float)
        residual = rhs - system.matrix @ x
        bound = 1e-12 * (np.linalg.norm(rhs) + scale * np.abs(x).max())
        assert np.linalg.norm(residual) <= bound


def test_goal_series_matches_states(mandel_small):
    _, ops, grid = mandel_small
    traj = run_primal_fom(ops, grid)
    expect = traj.P @ ops.g_goal
    np.testing.assert_allclose(traj.goal_series, expect, rtol=1e-12)


def test_store_states_false_keeps_goal_series(mandel_small):
    _, ops, grid = mandel_small
    lean = run_primal_fom(ops, grid, store_states=False)
    full = run_primal_fom(ops, grid)
    np.testing.assert_array_equal(lean.goal_series, full.goal_series)
    assert lean.U is None
    np.testing.assert_array_equal(np.asarray(lean.final_state.p, dtype=float),
                                  np.asarray(full.P[-1], dtype=float))
    with pytest.raises(ValueError):
        lean.state(3)


def test_unconstrained_ops_rejected(mandel_small):
    spec, _, grid = mandel_small
    from poromor.assembly import assemble_operators
    from poromor.discretization import (ProblemKind, build_structured_mesh,
                                        build_taylor_hood_space,
                                        tag_boundaries)

    mesh = tag_boundaries(
        build_structured_mesh(spec.origin, spec.extent, spec.cells_per_axis),
        ProblemKind.MANDEL)
    space = build_taylor_hood_space(mesh)
    raw = assemble_operators(space, spec.material, ProblemKind.MANDEL,
                             spec.traction_tag,
                             np.asarray(spec.traction_direction),
                             spec.goal_tag, spec.neumann_tags,
                             constrain=False)
    with pytest.raises(ValueError):
        StepSystem(raw, grid.k)


def test_footing_gmres_step(footing_tiny):
    spec, ops, grid = footing_tiny
    traj = run_primal_fom(ops, grid, solver=spec.solver)
    assert traj.solve_stats["solves"] == grid.num_elements
    assert "gmres_mean_iterations" in traj.solve_stats
    # pressure responds to the compression load; 2^3 mesh has no
    # compression facets, so this is the zero-load trivial case
    assert np.abs(traj.P).max() == 0.0


def test_footing_desk_load_nonzero():
    spec = footing_spec(cells=(4, 4, 4), steps=2)
    ops, grid = build_problem(spec)
    traj = run_primal_fom(ops, grid, solver=spec.solver)
    assert np.abs(traj.P[1]).max() > 0.0
