import numpy as np
import pytest

from symoc import (
    ControlGrid,
    DimensionMismatchError,
    OcProblem,
    StageSolveConfig,
    control_update_norm,
    derivative_check,
    discrete_cost,
    forward_sweep,
    make_adjoint_pair,
    make_double_well,
    symplectic_euler,
)


def constant_cost_problem(level):
    """h is a constant and the end cost vanishes."""
    return OcProblem(
        state_dim=1,
        control_dim=1,
        dynamics=lambda x, u: np.zeros(1),
        running_cost=lambda x, u: level,
        end_cost=lambda x: 0.0,
    )


class TestDiscreteCost:
    def test_double_well_at_equilibrium(self):
        problem = make_double_well()
        pair = symplectic_euler()
        n_steps, tau = 160, 6.0 / 160
        u = ControlGrid.zeros(n_steps, 1, 1)
        traj = forward_sweep(problem, pair, np.array([-1.0, 0.0]), u, tau, n_steps, StageSolveConfig())
        assert discrete_cost(problem, traj, u, pair.b) == pytest.approx(20.0, abs=0)

    def test_constant_running_cost_integrates_to_T_times_c(self):
        rng = np.random.default_rng(5)
        problem = constant_cost_problem(level=1.75)
        b = rng.random(3) + 0.1
        b /= b.sum()
        pair = make_adjoint_pair(rng.standard_normal((3, 3)) * 0.1, b)
        n_steps, tau = 7, 0.3
        u = ControlGrid(rng.standard_normal((n_steps, 3, 1)))
        traj = forward_sweep(problem, pair, np.zeros(1), u, tau, n_steps, StageSolveConfig())
        assert discrete_cost(problem, traj, u, pair.b) == pytest.approx(
            tau * n_steps * 1.75, rel=1e-14
        )

    def test_pure_end_cost_depends_only_on_final_state(self):
        problem = OcProblem(
            state_dim=1,
            control_dim=1,
            dynamics=lambda x, u: np.array([u[0]]),
            running_cost=lambda x, u: 0.0,
            end_cost=lambda x: float(np.cos(x[0])),
        )
        pair = symplectic_euler()
        u = ControlGrid(np.random.default_rng(0).standard_normal((5, 1, 1)))
        traj = forward_sweep(problem, pair, np.zeros(1), u, 0.1, 5, StageSolveConfig())
        assert discrete_cost(problem, traj, u, pair.b) == pytest.approx(
            np.cos(traj.states[-1, 0]), abs=0
        )

    def test_stage_permutation_invariance(self):
        rng = np.random.default_rng(99)
        problem = make_double_well()
        s = 3
        b = rng.random(s) + 0.2
        b /= b.sum()
        A = 0.2 * rng.standard_normal((s, s))
        perm = np.array([2, 0, 1])
        pair = make_adjoint_pair(A, b)
        pair_p = make_adjoint_pair(A[np.ix_(perm, perm)], b[perm])
        n_steps, tau = 6, 0.25
        u_vals = rng.standard_normal((n_steps, s, 1))
        u = ControlGrid(u_vals)
        u_p = ControlGrid(u_vals[:, perm, :])
        xi = np.array([-1.0, 0.0])
        cfg = StageSolveConfig()
        traj = forward_sweep(problem, pair, xi, u, tau, n_steps, cfg)
        traj_p = forward_sweep(problem, pair_p, xi, u_p, tau, n_steps, cfg)
        assert discrete_cost(problem, traj, u, pair.b) == pytest.approx(
            discrete_cost(problem, traj_p, u_p, pair_p.b), rel=1e-12
        )

    def test_dimension_mismatch(self):
        problem = make_double_well()
        pair = symplectic_euler()
        u = ControlGrid.zeros(4, 1, 1)
        traj = forward_sweep(problem, pair, np.array([-1.0, 0.0]), u, 0.1, 4, StageSolveConfig())
        with pytest.raises(DimensionMismatchError):
            discrete_cost(problem, traj, ControlGrid.zeros(5, 1, 1), pair.b)
        with pytest.raises(DimensionMismatchError):
            discrete_cost(problem, traj, u, np.array([0.5, 0.5]))


class TestControlUpdateNorm:
    def test_identical_grids(self):
        u = ControlGrid(np.random.default_rng(1).standard_normal((4, 2, 3)))
        assert control_update_norm(u, u) == 0.0

    def test_single_entry(self):
        assert control_update_norm(
            ControlGrid(np.full((1, 1, 1), 3.0)), ControlGrid(np.full((1, 1, 1), 1.0))
        ) == pytest.approx(2.0, abs=0)

    def test_sum_of_euclidean_norms(self):
        new = np.zeros((2, 1, 2))
        new[0, 0] = (3.0, 4.0)
        assert control_update_norm(
            ControlGrid(new), ControlGrid(np.zeros((2, 1, 2)))
        ) == pytest.approx(5.0, abs=0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            control_update_norm(ControlGrid.zeros(2, 1, 1), ControlGrid.zeros(3, 1, 1))


class TestOcProblem:
    def test_finite_difference_fallback(self):
        problem = OcProblem(
            state_dim=2,
            control_dim=1,
            dynamics=lambda x, u: np.array([x[1] ** 2, x[0] * u[0]]),
            running_cost=lambda x, u: float(x[0] ** 2 + u[0] ** 2),
            end_cost=lambda x: float(np.sin(x[0]) + x[1] ** 2),
        )
        x = np.array([0.3, -0.7])
        u = np.array([0.5])
        assert problem.dynamics_jac_x(x, u) == pytest.approx(
            np.array([[0.0, 2 * x[1]], [u[0], 0.0]]), rel=1e-7, abs=1e-8
        )
        assert problem.dynamics_jac_u(x, u) == pytest.approx(
            np.array([[0.0], [x[0]]]), rel=1e-7, abs=1e-8
        )
        assert problem.end_cost_grad(x) == pytest.approx(
            np.array([np.cos(x[0]), 2 * x[1]]), rel=1e-7
        )

    def test_projection_idempotent(self):
        problem = OcProblem(
            state_dim=1,
            control_dim=1,
            dynamics=lambda x, u: np.array([u[0]]),
            running_cost=lambda x, u: 0.0,
            end_cost=lambda x: 0.0,
            control_project=lambda u: np.clip(u, -1.0, 1.0),
        )
        rng = np.random.default_rng(0)
        for _ in range(20):
            u = 3.0 * rng.standard_normal(1)
            once = problem.control_project(u)
            assert np.array_equal(problem.control_project(once), once)

    def test_derivative_check_passes_for_builtin(self):
        derivative_check(make_double_well(), np.random.default_rng(0), n_points=25)

    def test_derivative_check_catches_wrong_jacobian(self):
        problem = OcProblem(
            state_dim=1,
            control_dim=1,
            dynamics=lambda x, u: np.array([x[0] ** 2]),
            dynamics_jac_x=lambda x, u: np.array([[1.0]]),  # wrong on purpose
            running_cost=lambda x, u: 0.0,
            end_cost=lambda x: 0.0,
        )
        with pytest.raises(AssertionError, match="disagree"):
            derivative_check(problem, np.random.default_rng(0), n_points=5)

    def test_invalid_dimensions(self):
        with pytest.raises(ValueError):
            OcProblem(
                state_dim=0,
                control_dim=1,
                dynamics=lambda x, u: x,
                running_cost=lambda x, u: 0.0,
                end_cost=lambda x: 0.0,
            )


class TestControlGrid:
    def test_shape_validation(self):
        with pytest.raises(DimensionMismatchError):
            ControlGrid(np.zeros((3, 2)))

    def test_admissibility(self):
        problem = OcProblem(
            state_dim=1,
            control_dim=1,
            dynamics=lambda x, u: np.array([u[0]]),
            running_cost=lambda x, u: 0.0,
            end_cost=lambda x: 0.0,
            control_project=lambda u: np.clip(u, -1.0, 1.0),
        )
        wild = ControlGrid(np.full((3, 1, 1), 2.0))
        assert not wild.is_admissible(problem)
        tamed = wild.project(problem)
        assert tamed.is_admissible(problem)
        assert np.all(tamed.values == 1.0)
