"""The regularized forward-backward sweep iteration.

One outer iteration solves, in sequence, the forward state recursion
with the control fixed, the backward adjoint recursion with states and
control fixed, and a per-step maximization of the regularized step
Hamiltonian

    Ht(x, lam, u, q, p) = H_tau(x, lam, u)
        - rho/2 (|q - dH_tau/dlam|^2 + |p + dH_tau/dx|^2),

where q and p are the forward differences of the freshly swept state
and adjoint grids.  Along the sweeps' own trajectories the two penalty
terms vanish, so the regularization only changes the maximization step;
for sufficiently large rho it makes the discrete cost nonincreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import ControlGrid, OcProblem, TrajectoryPair, control_update_norm, discrete_cost
from .sweep import (
    StageSolveConfig,
    backward_sweep,
    forward_sweep,
    hamiltonian_tau_grad_x,
    reduced_step,
)
from .tableau import ButcherPair

#: per-step slack on "the maximization never worsens"
GAIN_SLACK = 1e-14


@dataclass(frozen=True)
class MaximizerConfig:
    """How the per-step control maximization is carried out.

    kind "closed_form" uses the problem's analytic maximizer when it
    provides one (falling back to the numeric path when it does not or
    when it declines the tableau); "gradient_ascent" always uses the
    numeric path: projected gradient ascent with backtracking.  The
    ascent step defaults to 1/(1 + rho), matching the curvature the
    penalty adds for control-affine problems.
    """

    kind: str = "closed_form"
    max_steps: int = 50
    grad_tol: float = 1e-10
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    initial_step: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("closed_form", "gradient_ascent"):
            raise ValueError(f"unknown maximizer kind {self.kind!r}")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")


@dataclass(frozen=True)
class RegularizationConfig:
    """Outer-loop parameters of the regularized sweep iteration."""

    rho: float
    epsilon: float = 1e-8
    max_outer_iters: int = 20000
    maximizer: MaximizerConfig = field(default_factory=MaximizerConfig)

    def __post_init__(self):
        if self.rho < 0.0:
            raise ValueError("rho must be nonnegative")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")


@dataclass(frozen=True)
class IterationRecord:
    """One row of the convergence history."""

    iteration: int
    cost: float
    update_norm: float
    hbar_gain: float
    max_penalty: float


@dataclass
class SweepReport:
    """Per-iteration convergence record of one run."""

    records: list
    termination_reason: str
    final_cost: float
    stalled_steps: int = 0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def converged(self) -> bool:
        return self.termination_reason == "tolerance"

    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    def update_norms(self) -> np.ndarray:
        return np.array([r.update_norm for r in self.records])


class StepMaxResult(NamedTuple):
    control: np.ndarray
    value: float
    initial_value: float
    stalled: bool


class _OwnStepData(NamedTuple):
    """Reduced quantities of a stored trajectory step, reused so that
    own-control evaluations reproduce the sweeps' arithmetic exactly."""

    f_tau: np.ndarray
    h_tau: float
    grad_x: np.ndarray


def _own_step_data(problem, pair, traj, u_values, n) -> _OwnStepData:
    X = traj.stage_states[n]
    G = traj.stage_adjoint_slopes[n]
    F = np.empty_like(X)
    h_tau = 0.0
    for i in range(pair.s):
        F[i] = problem.dynamics(X[i], u_values[n, i])
        h_tau += pair.b[i] * problem.running_cost(X[i], u_values[n, i])
    # the adjoint grid update gives dH_tau/dx = -sum_i b_i G_i exactly
    return _OwnStepData(pair.b @ F, float(h_tau), -(pair.b @ G))


def augmented_hamiltonian(
    problem: OcProblem,
    pair: ButcherPair,
    x,
    lam_next,
    u_n,
    q,
    p,
    rho: float,
    tau: float,
    cfg: StageSolveConfig,
    own_data: Optional[_OwnStepData] = None,
) -> float:
    """Regularized step Hamiltonian at one grid point.

    ``q`` and ``p`` are the forward differences of the state and adjoint
    grids supplied by the caller.  With rho = 0 this is exactly the
    reduced Hamiltonian; when (q, p) come from a trajectory consistent
    with the same control, the penalties vanish.
    """
    lam_next = np.asarray(lam_next, dtype=float)
    if own_data is not None:
        f_tau, h_tau, grad_x = own_data
    else:
        f_tau, h_tau, stages = reduced_step(problem, pair, x, u_n, tau, cfg)
        grad_x = None
    value = float(lam_next @ f_tau - h_tau)
    if rho == 0.0:
        return value
    if grad_x is None:
        grad_x = hamiltonian_tau_grad_x(problem, pair, x, lam_next, u_n, tau, cfg, stages=stages)
    r_state = np.asarray(q, dtype=float) - f_tau
    r_adjoint = np.asarray(p, dtype=float) + grad_x
    return value - 0.5 * rho * (float(r_state @ r_state) + float(r_adjoint @ r_adjoint))


def _project_rows(problem, u_n):
    out = np.empty_like(u_n)
    for i in range(u_n.shape[0]):
        out[i] = problem.control_project(u_n[i])
    return out


def maximize_step_control(
    problem: OcProblem,
    pair: ButcherPair,
    x,
    lam_next,
    u_init,
    q,
    p,
    rho: float,
    tau: float,
    cfg: StageSolveConfig,
    maximizer: MaximizerConfig,
    own_data: Optional[_OwnStepData] = None,
) -> StepMaxResult:
    """Maximize the regularized step Hamiltonian over one step's stage
    controls, never returning anything worse than ``u_init``.

    Uses the problem's analytic maximizer when available and accepted by
    the tableau, otherwise projected gradient ascent with backtracking.
    When the line search cannot improve at all, ``u_init`` comes back
    with the ``stalled`` flag and the outer iteration stays monotone.
    """
    u_init = np.asarray(u_init, dtype=float)
    lam_next = np.asarray(lam_next, dtype=float)
    h_init = augmented_hamiltonian(
        problem, pair, x, lam_next, u_init, q, p, rho, tau, cfg, own_data=own_data
    )

    # warm-start the implicit stage solves across the many evaluations at
    # this grid point; successive candidate controls are close together
    stage_guess = [None]

    def evaluate(u_n):
        f_tau, h_tau, stages = reduced_step(
            problem, pair, x, u_n, tau, cfg, init=stage_guess[0]
        )
        stage_guess[0] = stages
        value = float(lam_next @ f_tau - h_tau)
        if rho == 0.0:
            return value
        grad_x = hamiltonian_tau_grad_x(problem, pair, x, lam_next, u_n, tau, cfg, stages=stages)
        r_state = q - f_tau
        r_adjoint = p + grad_x
        return value - 0.5 * rho * (float(r_state @ r_state) + float(r_adjoint @ r_adjoint))

    if maximizer.kind == "closed_form" and problem.closed_form_argmax is not None:
        candidate = problem.closed_form_argmax(pair, x, lam_next, u_init, q, p, rho, tau)
        if candidate is not None:
            candidate = _project_rows(problem, np.asarray(candidate, dtype=float).reshape(u_init.shape))
            h_new = evaluate(candidate)
            # an analytic argmax can only fall below the start by rounding;
            # anything beyond that loose bound means the callback is wrong
            if np.isfinite(h_new) and h_new >= h_init - 1e-9 * (1.0 + abs(h_init)):
                return StepMaxResult(candidate, h_new, h_init, False)
            return StepMaxResult(u_init, h_init, h_init, False)

    # projected ascent on a central-difference gradient, with the step
    # scaled by the measured per-component curvature (the default scale
    # 1/(1 + rho) is the exact inverse curvature for unit control gain)
    u = u_init
    h_cur = h_init
    improved = False
    stalled = False
    step0 = maximizer.initial_step if maximizer.initial_step is not None else 1.0 / (1.0 + rho)
    fd_step = 1e-4 * (1.0 + float(np.max(np.abs(u_init))))
    size = u.size
    grad = np.empty(size)
    direction = np.empty(size)
    for _ in range(maximizer.max_steps):
        flat = u.ravel()
        for k in range(size):
            bump = np.zeros(size)
            bump[k] = fd_step
            h_plus = evaluate((flat + bump).reshape(u.shape))
            h_minus = evaluate((flat - bump).reshape(u.shape))
            grad[k] = (h_plus - h_minus) / (2.0 * fd_step)
            curvature = (h_plus + h_minus - 2.0 * h_cur) / fd_step**2
            if np.isfinite(curvature) and curvature < -1e-9 * (1.0 + rho):
                direction[k] = -grad[k] / curvature
            else:
                direction[k] = step0 * grad[k]
        gnorm = float(np.sqrt(grad @ grad))
        if gnorm <= maximizer.grad_tol:
            break
        slope = float(grad @ direction)
        if slope <= 0.0:
            direction = step0 * grad
            slope = step0 * gnorm**2
        eta = 1.0
        accepted = False
        noise_floor = 1e-16 * (1.0 + abs(h_cur))
        for _ in range(maximizer.max_backtracks):
            trial = _project_rows(problem, u + eta * direction.reshape(u.shape))
            h_trial = evaluate(trial)
            if np.isfinite(h_trial) and h_trial > h_cur + 1e-4 * eta * slope:
                u, h_cur = trial, h_trial
                accepted = improved = True
                break
            eta *= maximizer.backtrack_factor
            if eta * slope < noise_floor:
                break
        if not accepted:
            stalled = not improved
            break
    if improved:
        return StepMaxResult(u, h_cur, h_init, False)
    return StepMaxResult(u_init, h_init, h_init, stalled)


def _sweep_once(problem, pair, xi, u, tau, n_steps, reg, cfg):
    """One full pass: forward, backward, then per-step maximization.

    Returns the updated control values, the (pre-update) trajectories,
    the discrete cost, the accumulated maximization gain tau * sum_n of
    the step increments, the worst penalty residual, and the number of
    stalled steps.  The per-step maximizations are independent of each
    other: they share only read-only trajectory data.
    """
    traj = forward_sweep(problem, pair, xi, u, tau, n_steps, cfg)
    traj = backward_sweep(problem, pair, traj, u, cfg)
    cost = discrete_cost(problem, traj, u, pair.b)
    q_grid = np.diff(traj.states, axis=0) / tau
    p_grid = np.diff(traj.adjoints, axis=0) / tau
    u_next = np.empty_like(u.values)
    gain = 0.0
    max_penalty = 0.0
    stalls = 0
    for n in range(n_steps):
        own = _own_step_data(problem, pair, traj, u.values, n)
        r_state = q_grid[n] - own.f_tau
        r_adjoint = p_grid[n] + own.grad_x
        max_penalty = max(
            max_penalty,
            float(np.sqrt(r_state @ r_state)) + float(np.sqrt(r_adjoint @ r_adjoint)),
        )
        result = maximize_step_control(
            problem,
            pair,
            traj.states[n],
            traj.adjoints[n + 1],
            u.values[n],
            q_grid[n],
            p_grid[n],
            reg.rho,
            tau,
            cfg,
            reg.maximizer,
            own_data=own,
        )
        u_next[n] = result.control
        gain += result.value - result.initial_value
        stalls += int(result.stalled)
    return u_next, traj, cost, tau * gain, max_penalty, stalls


def _drive(problem, pair, xi, u0, tau, n_steps, reg, cfg, mixer=None):
    """Outer loop shared by the plain and the accelerated drivers.

    The stopping functional is the control update produced by the sweep
    map at the current iterate, summed per step; for the plain driver
    this is exactly the iterate-to-iterate update.  (Stopping on the
    update of extrapolated iterates instead could fire spuriously while
    the residual is still large.)
    """
    u = u0.project(problem)
    records = []
    termination = "iteration budget"
    total_stalls = 0
    for k in range(reg.max_outer_iters):
        swept_values, _, cost, gain, max_penalty, stalls = _sweep_once(
            problem, pair, xi, u, tau, n_steps, reg, cfg
        )
        total_stalls += stalls
        swept = ControlGrid(swept_values)
        norm = control_update_norm(swept, u)
        records.append(IterationRecord(k, cost, norm, gain, max_penalty))
        if norm < reg.epsilon:
            u = swept
            termination = "tolerance"
            break
        if mixer is not None:
            u = ControlGrid(mixer.apply(u.values, swept_values)).project(problem)
        else:
            u = swept
    final_traj = backward_sweep(
        problem, pair, forward_sweep(problem, pair, xi, u, tau, n_steps, cfg), u, cfg
    )
    final_cost = discrete_cost(problem, final_traj, u, pair.b)
    report = SweepReport(
        records=records,
        termination_reason=termination,
        final_cost=final_cost,
        stalled_steps=total_stalls,
    )
    return u, final_traj, report


def run_iteration(
    problem: OcProblem,
    pair: ButcherPair,
    xi,
    u0: ControlGrid,
    tau: float,
    n_steps: int,
    reg: RegularizationConfig,
    cfg: StageSolveConfig,
):
    """Iterate the regularized forward-backward sweep until the control
    update norm drops below ``reg.epsilon`` or the iteration budget runs
    out (which is a reported outcome, not an error).

    Returns ``(control, trajectories, report)`` with trajectories
    consistent with the returned control.
    """
    return _drive(problem, pair, xi, u0, tau, n_steps, reg, cfg, mixer=None)
