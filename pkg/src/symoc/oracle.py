"""Independent validators: finite-difference cost gradients and a
brute-force minimizer for tiny instances.

These deliberately avoid the adjoint machinery so they can certify it:
the cost gradient here is built from forward sweeps only, and the
direct minimizer is plain multi-start descent on that gradient.
"""

from __future__ import annotations

import numpy as np

from .core import ControlGrid, OcProblem, derivative_check, discrete_cost
from .sweep import StageSolveConfig, forward_sweep
from .tableau import ButcherPair

MAX_DIRECT_DIM = 20


def sweep_cost(problem, pair, xi, u: ControlGrid, tau, n_steps, cfg) -> float:
    """Discrete cost of a control grid, via a fresh forward sweep."""
    traj = forward_sweep(problem, pair, xi, u, tau, n_steps, cfg)
    return discrete_cost(problem, traj, u, pair.b)


def fd_cost_gradient(
    problem: OcProblem,
    pair: ButcherPair,
    xi,
    u: ControlGrid,
    tau: float,
    n_steps: int,
    cfg: StageSolveConfig,
    step: float | None = None,
) -> np.ndarray:
    """Central differences of the discrete cost in every stage control.

    Returns an array with the control grid's shape (N, s, m).  The
    default step is 1e-6 * (1 + max|u|).
    """
    if step is None:
        largest = float(np.max(np.abs(u.values))) if u.values.size else 0.0
        step = 1e-6 * (1.0 + largest)
    if step <= 0.0:
        raise ValueError("step must be positive")
    flat = u.values.ravel().copy()
    grad = np.empty_like(flat)
    for k in range(flat.size):
        saved = flat[k]
        flat[k] = saved + step
        hi = sweep_cost(problem, pair, xi, ControlGrid(flat.reshape(u.values.shape).copy()), tau, n_steps, cfg)
        flat[k] = saved - step
        lo = sweep_cost(problem, pair, xi, ControlGrid(flat.reshape(u.values.shape).copy()), tau, n_steps, cfg)
        flat[k] = saved
        grad[k] = (hi - lo) / (2.0 * step)
    return grad.reshape(u.values.shape)


def direct_minimize(
    problem: OcProblem,
    pair: ButcherPair,
    xi,
    tau: float,
    n_steps: int,
    cfg: StageSolveConfig,
    n_starts: int = 5,
    seed: int = 0,
    start_scale: float = 1.0,
    max_iters: int = 400,
    grad_tol: float = 1e-9,
):
    """Best-effort discrete optimum for tiny instances, independent of
    the sweep iteration.

    Multi-start gradient descent on the finite-difference cost gradient
    with backtracking line search; deterministic given the seed.
    Returns (control, cost) for the best start.
    """
    total_dim = n_steps * pair.s * problem.control_dim
    if total_dim > MAX_DIRECT_DIM:
        raise ValueError(
            f"direct_minimize is for tiny instances: {total_dim} control "
            f"variables exceed {MAX_DIRECT_DIM}"
        )
    rng = np.random.default_rng(seed)
    shape = (n_steps, pair.s, problem.control_dim)
    starts = [np.zeros(shape)]
    starts += [start_scale * rng.standard_normal(shape) for _ in range(n_starts)]
    best_u = None
    best_cost = np.inf
    for u0 in starts:
        u_vals = u0.copy()
        cost = sweep_cost(problem, pair, xi, ControlGrid(u_vals), tau, n_steps, cfg)
        for _ in range(max_iters):
            grad = fd_cost_gradient(
                problem, pair, xi, ControlGrid(u_vals), tau, n_steps, cfg
            )
            gnorm = float(np.linalg.norm(grad.ravel()))
            if gnorm <= grad_tol:
                break
            eta = 1.0
            improved = False
            for _ in range(60):
                trial = u_vals - eta * grad
                trial_cost = sweep_cost(problem, pair, xi, ControlGrid(trial), tau, n_steps, cfg)
                if trial_cost < cost - 1e-4 * eta * gnorm**2:
                    u_vals, cost = trial, trial_cost
                    improved = True
                    break
                eta *= 0.5
            if not improved:
                break
        if cost < best_cost:
            best_cost = cost
            best_u = u_vals.copy()
    return ControlGrid(best_u), float(best_cost)


def validation_suite():
    """Cross-checks behind the `validate` CLI command.

    Returns a list of (name, passed, detail) tuples covering adjoint
    exactness, tableau symplecticity, gradient agreement, the analytic
    LQ optimum, and direct-minimize agreement.
    """
    # imported here to keep the oracle free of iteration machinery otherwise
    from .iteration import RegularizationConfig, run_iteration
    from .problems import (
        LqParams,
        lq_optimal_cost,
        make_double_well,
        make_lq,
    )
    from .sweep import backward_sweep, hamiltonian_tau_grad_u
    from .tableau import implicit_midpoint, make_adjoint_pair, symplectic_euler

    cfg = StageSolveConfig()
    rng = np.random.default_rng(7)
    results = []

    def record(name, passed, detail):
        results.append((name, bool(passed), detail))

    # derivative self-checks of the built-in problems
    for name, problem in (("double-well", make_double_well()), ("lq", make_lq())):
        try:
            worst = derivative_check(problem, rng, n_points=50)
            record(f"derivatives[{name}]", True, f"worst relative error {worst:.2e}")
        except AssertionError as exc:
            record(f"derivatives[{name}]", False, str(exc))

    # tableau symplecticity, built-ins plus random consistent tableaux
    worst_res = 0.0
    for pair in (symplectic_euler(), implicit_midpoint()):
        worst_res = max(worst_res, pair.symplecticity_residual())
    for _ in range(10):
        s = int(rng.integers(1, 4))
        b = rng.random(s) + 0.1
        b /= b.sum()
        pair = make_adjoint_pair(rng.standard_normal((s, s)), b)
        worst_res = max(worst_res, pair.symplecticity_residual())
    record("tableau symplecticity", worst_res <= 1e-14, f"max residual {worst_res:.2e}")

    # adjoint exactness: lambda_0 against finite differences of the cost in xi
    problem = make_double_well()
    n_steps, tau = 8, 0.25
    worst_rel = 0.0
    for pair in (symplectic_euler(), implicit_midpoint()):
        for _ in range(5):
            u = ControlGrid(rng.standard_normal((n_steps, pair.s, 1)))
            xi = np.array([-1.0, 0.0]) + 0.1 * rng.standard_normal(2)
            traj = forward_sweep(problem, pair, xi, u, tau, n_steps, cfg)
            traj = backward_sweep(problem, pair, traj, u, cfg)
            fd = np.empty(2)
            for k in range(2):
                bump = np.zeros(2)
                bump[k] = 1e-6
                fd[k] = (
                    sweep_cost(problem, pair, xi + bump, u, tau, n_steps, cfg)
                    - sweep_cost(problem, pair, xi - bump, u, tau, n_steps, cfg)
                ) / 2e-6
            rel = np.max(np.abs(traj.adjoints[0] + fd)) / max(1.0, float(np.max(np.abs(fd))))
            worst_rel = max(worst_rel, float(rel))
    record("adjoint exactness", worst_rel <= 1e-5, f"worst relative error {worst_rel:.2e}")

    # gradient agreement: -tau * dH_tau/du blocks against fd_cost_gradient
    worst_rel = 0.0
    for pair in (symplectic_euler(), implicit_midpoint()):
        u = ControlGrid(rng.standard_normal((n_steps, pair.s, 1)))
        xi = np.array([-1.0, 0.0])
        traj = forward_sweep(problem, pair, xi, u, tau, n_steps, cfg)
        traj = backward_sweep(problem, pair, traj, u, cfg)
        fd = fd_cost_gradient(problem, pair, xi, u, tau, n_steps, cfg)
        scale = max(1.0, float(np.max(np.abs(fd))))
        for n in range(n_steps):
            blocks = hamiltonian_tau_grad_u(
                problem, pair, traj.states[n], traj.adjoints[n + 1], u.values[n], tau, cfg,
                stages=traj.stage_states[n],
            )
            worst_rel = max(worst_rel, float(np.max(np.abs(-tau * blocks - fd[n]))) / scale)
    record("cost gradient identity", worst_rel <= 1e-5, f"worst relative error {worst_rel:.2e}")

    # analytic LQ optimum through the full iteration
    lq_params = LqParams()
    lq = make_lq(lq_params)
    reg = RegularizationConfig(rho=1.0, epsilon=1e-10, max_outer_iters=5000)
    _, _, report = run_iteration(
        lq, implicit_midpoint(), np.array([lq_params.initial_state]),
        ControlGrid.zeros(40, 1, 1), lq_params.horizon / 40, 40, reg, cfg,
    )
    err = abs(report.final_cost - lq_optimal_cost(lq_params))
    record("lq analytic optimum", err <= 1e-6, f"cost error {err:.2e}")

    # direct transcription agreement on a tiny LQ instance
    pair = symplectic_euler()
    _, direct_cost = direct_minimize(lq, pair, np.array([1.0]), 0.2, 5, cfg, seed=3)
    _, _, report = run_iteration(
        lq, pair, np.array([1.0]), ControlGrid.zeros(5, 1, 1),
        0.2, 5, RegularizationConfig(rho=1.0, epsilon=1e-12, max_outer_iters=5000), cfg,
    )
    gap = abs(direct_cost - report.final_cost)
    record("direct minimize agreement", gap <= 1e-6, f"cost gap {gap:.2e}")

    return results
