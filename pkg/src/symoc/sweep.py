"""Forward state sweep, backward adjoint sweep, and the reduced one-step
Hamiltonian machinery.

The state recursion uses the forward tableau (A, b); the adjoint
recursion uses the adjoint tableau (A~, b).  Both stage systems are
solved by direct substitution for explicit pairs and by a damped
fixed-point iteration for implicit pairs.  The reduced quantities treat
one Runge-Kutta step as a single map: with stage states X_i(x, u)
solving the stage equations,

    f_tau(x, u) = sum_i b_i f(X_i, U_i),
    h_tau(x, u) = sum_i b_i h(X_i, U_i),
    H_tau(x, lam, u) = lam . f_tau - h_tau,

so any symplectic pair takes the shape of the one-stage first-order
scheme: the step increments satisfy

    (x_{n+1} - x_n) / tau = dH_tau/dlam,
    (lam_{n+1} - lam_n) / tau = -dH_tau/dx.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import ControlGrid, OcProblem, TrajectoryPair
from .errors import DimensionMismatchError, PsiSolveError, StageDivergenceError, StepSizeWarning
from .tableau import ButcherPair, check_step_size


@dataclass(frozen=True)
class StageSolveConfig:
    """Controls for the implicit stage iterations."""

    max_inner_iters: int = 100
    residual_tol: float = 1e-12
    damping: float = 1.0

    def __post_init__(self):
        if self.residual_tol <= 0.0:
            raise ValueError("residual_tol must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be at least 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")


def _forward_stages(problem, pair, x, u_n, tau, cfg, step=None, init=None):
    """Solve X_i = x + tau sum_j a_ij f(X_j, U_j); return (X, F) with
    F_i = f(X_i, U_i) evaluated at the returned stages.

    ``init`` warm-starts the implicit iteration (the solution for a
    nearby control, typically)."""
    s = pair.s
    d = x.size
    A = pair.A
    F = np.empty((s, d))
    if pair.explicit:
        X = np.empty((s, d))
        for i in range(s):
            X[i] = x if i == 0 else x + tau * (A[i, :i] @ F[:i])
            F[i] = problem.dynamics(X[i], u_n[i])
        return X, F
    X = np.repeat(x[None, :], s, axis=0) if init is None else init.copy()
    for i in range(s):
        F[i] = problem.dynamics(X[i], u_n[i])
    residual = np.inf
    for _ in range(cfg.max_inner_iters):
        target = x[None, :] + tau * (A @ F)
        residual = float(np.max(np.abs(target - X)))
        if residual <= cfg.residual_tol:
            return X, F
        if not np.isfinite(residual):
            break
        X = X + cfg.damping * (target - X)
        for i in range(s):
            F[i] = problem.dynamics(X[i], u_n[i])
    raise StageDivergenceError(step if step is not None else -1, residual, cfg.residual_tol)


def _adjoint_stages(problem, pair, X, u_n, lam_next, tau, cfg, step=None):
    """Solve the adjoint stage system given lam_{n+1}.

    Eliminating lam_n from the stage relations leaves
    Lam_i = lam_{n+1} + tau sum_j (a~_ij - b_j) G_j with
    G_j = -df/dx(X_j, U_j)^T Lam_j + dh/dx(X_j, U_j).  The coupling
    matrix inherits the transposed sparsity of A, so explicit pairs are
    solved by substitution in reverse stage order.
    """
    s = pair.s
    d = lam_next.size
    M = pair.A_tilde - pair.b[None, :]
    fxT = np.empty((s, d, d))
    hx = np.empty((s, d))
    for i in range(s):
        fxT[i] = np.asarray(problem.dynamics_jac_x(X[i], u_n[i]), dtype=float).T
        hx[i] = np.asarray(problem.running_cost_grad_x(X[i], u_n[i]), dtype=float)
    G = np.empty((s, d))
    if pair.explicit:
        Lam = np.empty((s, d))
        for i in reversed(range(s)):
            Lam[i] = lam_next if i == s - 1 else lam_next + tau * (M[i, i + 1 :] @ G[i + 1 :])
            G[i] = hx[i] - fxT[i] @ Lam[i]
        return Lam, G
    Lam = np.repeat(lam_next[None, :], s, axis=0)
    for i in range(s):
        G[i] = hx[i] - fxT[i] @ Lam[i]
    residual = np.inf
    for _ in range(cfg.max_inner_iters):
        target = lam_next[None, :] + tau * (M @ G)
        residual = float(np.max(np.abs(target - Lam)))
        if residual <= cfg.residual_tol:
            return Lam, G
        if not np.isfinite(residual):
            break
        Lam = Lam + cfg.damping * (target - Lam)
        for i in range(s):
            G[i] = hx[i] - fxT[i] @ Lam[i]
    raise StageDivergenceError(step if step is not None else -1, residual, cfg.residual_tol)


def forward_sweep(
    problem: OcProblem,
    pair: ButcherPair,
    xi,
    u: ControlGrid,
    tau: float,
    n_steps: int,
    cfg: StageSolveConfig,
) -> TrajectoryPair:
    """Integrate the state recursion from x_0 = xi under the control grid.

    The step-size check is consulted and a violated bound is reported as
    a :class:`StepSizeWarning`, not an error.  Raises
    :class:`StageDivergenceError` when an implicit stage iteration fails.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (problem.state_dim,):
        raise DimensionMismatchError(f"initial state has shape {xi.shape}")
    if u.values.shape != (n_steps, pair.s, problem.control_dim):
        raise DimensionMismatchError(
            f"control grid {u.values.shape} does not match "
            f"(N={n_steps}, s={pair.s}, m={problem.control_dim})"
        )
    size_check = check_step_size(pair, problem.lipschitz_K, tau)
    if not size_check.ok:
        warnings.warn(size_check.message, StepSizeWarning, stacklevel=2)
    d = problem.state_dim
    states = np.empty((n_steps + 1, d))
    stage_states = np.empty((n_steps, pair.s, d))
    states[0] = xi
    for n in range(n_steps):
        X, F = _forward_stages(problem, pair, states[n], u.values[n], tau, cfg, step=n)
        stage_states[n] = X
        states[n + 1] = states[n] + tau * (pair.b @ F)
    return TrajectoryPair(
        states=states, stage_states=stage_states, tau=tau, horizon=tau * n_steps
    )


def backward_sweep(
    problem: OcProblem,
    pair: ButcherPair,
    state: TrajectoryPair,
    u: ControlGrid,
    cfg: StageSolveConfig,
) -> TrajectoryPair:
    """Integrate the adjoint recursion backwards from
    lam_N = -d(end_cost)/dx(x_N), filling the adjoint part of ``state``."""
    n_steps = state.steps
    if u.values.shape[0] != n_steps or u.values.shape[1] != pair.s:
        raise DimensionMismatchError("control grid does not match the trajectory")
    d = problem.state_dim
    tau = state.tau
    adjoints = np.empty((n_steps + 1, d))
    stage_adjoints = np.empty((n_steps, pair.s, d))
    slopes = np.empty((n_steps, pair.s, d))
    adjoints[n_steps] = -np.asarray(problem.end_cost_grad(state.states[n_steps]), dtype=float)
    for n in reversed(range(n_steps)):
        Lam, G = _adjoint_stages(
            problem, pair, state.stage_states[n], u.values[n], adjoints[n + 1], tau, cfg, step=n
        )
        stage_adjoints[n] = Lam
        slopes[n] = G
        adjoints[n] = adjoints[n + 1] - tau * (pair.b @ G)
    return replace(
        state,
        adjoints=adjoints,
        stage_adjoints=stage_adjoints,
        stage_adjoint_slopes=slopes,
        consistent=True,
    )


def reduced_step(problem, pair, x, u_n, tau, cfg, stages=None, init=None):
    """Return (f_tau, h_tau, X) for one step from x under stage controls u_n.

    When ``stages`` is given it is trusted as the solved stage states,
    which keeps repeated evaluations on a stored trajectory exact;
    ``init`` merely warm-starts a fresh implicit solve.
    """
    x = np.asarray(x, dtype=float)
    u_n = np.asarray(u_n, dtype=float)
    if stages is None:
        X, F = _forward_stages(problem, pair, x, u_n, tau, cfg, init=init)
    else:
        X = stages
        F = np.empty((pair.s, x.size))
        for i in range(pair.s):
            F[i] = problem.dynamics(X[i], u_n[i])
    f_tau = pair.b @ F
    h_tau = 0.0
    for i in range(pair.s):
        h_tau += pair.b[i] * problem.running_cost(X[i], u_n[i])
    return f_tau, float(h_tau), X


def hamiltonian_tau(problem, pair, x, lam_next, u_n, tau, cfg, stages=None) -> float:
    """Reduced step Hamiltonian lam_next . f_tau(x, u) - h_tau(x, u)."""
    f_tau, h_tau, _ = reduced_step(problem, pair, x, u_n, tau, cfg, stages=stages)
    return float(np.asarray(lam_next, dtype=float) @ f_tau - h_tau)


def _stage_sensitivities(problem, pair, X, u_n, tau):
    """Solve the linear system for Psi_i = dX_i/dx (dense, s*d unknowns)."""
    s = pair.s
    d = X.shape[1]
    jac = np.empty((s, d, d))
    for j in range(s):
        jac[j] = np.asarray(problem.dynamics_jac_x(X[j], u_n[j]), dtype=float)
    eye = np.eye(d)
    if s == 1:
        if pair.A[0, 0] == 0.0:
            return eye[None, :, :], jac
        system = eye - tau * pair.A[0, 0] * jac[0]
        try:
            return np.linalg.solve(system, eye)[None, :, :], jac
        except np.linalg.LinAlgError as exc:
            raise PsiSolveError(f"Psi solve failure: {exc}") from exc
    system = np.zeros((s * d, s * d))
    for i in range(s):
        system[i * d : (i + 1) * d, i * d : (i + 1) * d] = eye
        for j in range(s):
            system[i * d : (i + 1) * d, j * d : (j + 1) * d] -= tau * pair.A[i, j] * jac[j]
    rhs = np.tile(eye, (s, 1))
    try:
        flat = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise PsiSolveError(f"Psi solve failure: {exc}") from exc
    return flat.reshape(s, d, d), jac


def hamiltonian_tau_grad_x(problem, pair, x, lam_next, u_n, tau, cfg, stages=None) -> np.ndarray:
    """State gradient of the reduced Hamiltonian.

    Computed through the stage sensitivities Psi_i:
    sum_j b_j Psi_j^T (df/dx(X_j, U_j)^T lam_next - dh/dx(X_j, U_j)).
    On a consistent trajectory this equals -(lam_{n+1} - lam_n) / tau.
    """
    x = np.asarray(x, dtype=float)
    u_n = np.asarray(u_n, dtype=float)
    lam_next = np.asarray(lam_next, dtype=float)
    if stages is None:
        stages, _ = _forward_stages(problem, pair, x, u_n, tau, cfg)
    if pair.s == 1 and pair.A[0, 0] == 0.0:
        # one explicit stage: Psi is the identity
        jac = np.asarray(problem.dynamics_jac_x(stages[0], u_n[0]), dtype=float)
        hx = np.asarray(problem.running_cost_grad_x(stages[0], u_n[0]), dtype=float)
        return pair.b[0] * (jac.T @ lam_next - hx)
    psi, jac = _stage_sensitivities(problem, pair, stages, u_n, tau)
    out = np.zeros(x.size)
    for j in range(pair.s):
        hx = np.asarray(problem.running_cost_grad_x(stages[j], u_n[j]), dtype=float)
        out += pair.b[j] * (psi[j].T @ (jac[j].T @ lam_next - hx))
    return out


def hamiltonian_tau_grad_u(problem, pair, x, lam_next, u_n, tau, cfg, stages=None) -> np.ndarray:
    """Stage-control gradient of the reduced Hamiltonian, shape (s, m).

    Block i is b_i (df/du(X_i, U_i)^T Lam_i - dh/du(X_i, U_i)) with the
    stage adjoints Lam reconstructed from lam_next.  At a stationary
    interior control every block vanishes, and
    -tau * block(i, n) is the derivative of the discrete cost with
    respect to U_{i,n}.
    """
    x = np.asarray(x, dtype=float)
    u_n = np.asarray(u_n, dtype=float)
    lam_next = np.asarray(lam_next, dtype=float)
    if stages is None:
        stages, _ = _forward_stages(problem, pair, x, u_n, tau, cfg)
    Lam, _ = _adjoint_stages(problem, pair, stages, u_n, lam_next, tau, cfg)
    out = np.empty((pair.s, u_n.shape[1]))
    for i in range(pair.s):
        fu = np.asarray(problem.dynamics_jac_u(stages[i], u_n[i]), dtype=float)
        hu = np.asarray(problem.running_cost_grad_u(stages[i], u_n[i]), dtype=float)
        out[i] = pair.b[i] * (fu.T @ Lam[i] - hu)
    return out


def pmp_residuals(problem, pair, traj: TrajectoryPair, u: ControlGrid) -> dict:
    """Max residuals of the discrete optimality-system equations.

    Returns a dict with the worst residual of the grid state update, the
    state stage equations, the grid adjoint update, and the adjoint
    stage equations.  Useful to verify the ``consistent`` flag.
    """
    if traj.adjoints is None:
        raise ValueError("trajectory has no adjoint part; run backward_sweep first")
    tau = traj.tau
    M = pair.A_tilde - pair.b[None, :]
    worst = {"state": 0.0, "state_stages": 0.0, "adjoint": 0.0, "adjoint_stages": 0.0}
    for n in range(traj.steps):
        X = traj.stage_states[n]
        Lam = traj.stage_adjoints[n]
        G = traj.stage_adjoint_slopes[n]
        F = np.array([problem.dynamics(X[i], u.values[n, i]) for i in range(pair.s)])
        r = traj.states[n + 1] - traj.states[n] - tau * (pair.b @ F)
        worst["state"] = max(worst["state"], float(np.max(np.abs(r))))
        r = X - traj.states[n][None, :] - tau * (pair.A @ F)
        worst["state_stages"] = max(worst["state_stages"], float(np.max(np.abs(r))))
        g_now = np.array(
            [
                problem.running_cost_grad_x(X[i], u.values[n, i])
                - np.asarray(problem.dynamics_jac_x(X[i], u.values[n, i])).T @ Lam[i]
                for i in range(pair.s)
            ]
        )
        worst["adjoint_stages"] = max(
            worst["adjoint_stages"],
            float(np.max(np.abs(Lam - traj.adjoints[n + 1][None, :] - tau * (M @ G)))),
            float(np.max(np.abs(g_now - G))),
        )
        r = traj.adjoints[n + 1] - traj.adjoints[n] - tau * (pair.b @ G)
        worst["adjoint"] = max(worst["adjoint"], float(np.max(np.abs(r))))
    return worst
