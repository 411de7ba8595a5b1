"""Problem definitions, trajectory containers, and the discrete cost.

An :class:`OcProblem` bundles the callbacks of a finite-horizon control
problem: dynamics ``f(x, u)``, running cost ``h(x, u)``, end cost, their
derivatives, and an optional projection onto the admissible control set.
Derivative callbacks may be omitted, in which case central finite
differences with step ``1e-6 * (1 + |x|)`` are substituted.

All values here are immutable after construction; callbacks are expected
to be pure, so problems and trajectories can be shared freely across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatchError

FD_STEP_SCALE = 1e-6


def _identity_projection(u: np.ndarray) -> np.ndarray:
    return u


def _fd_jacobian(fn: Callable, argindex: int) -> Callable:
    """Central-difference Jacobian of fn with respect to its argindex-th arg."""

    def jac(*args):
        args = [np.asarray(a, dtype=float) for a in args]
        x = args[argindex]
        base = np.atleast_1d(np.asarray(fn(*args), dtype=float))
        step = FD_STEP_SCALE * (1.0 + float(np.linalg.norm(x)))
        out = np.empty((base.size, x.size))
        for k in range(x.size):
            hi = [a.copy() for a in args]
            lo = [a.copy() for a in args]
            hi[argindex][k] += step
            lo[argindex][k] -= step
            out[:, k] = (
                np.atleast_1d(fn(*hi)) - np.atleast_1d(fn(*lo))
            ) / (2.0 * step)
        return out

    return jac


def _fd_gradient(fn: Callable, argindex: int) -> Callable:
    """Central-difference gradient of a scalar fn with respect to one arg."""
    jac = _fd_jacobian(fn, argindex)

    def grad(*args):
        return jac(*args)[0]

    return grad


@dataclass(frozen=True)
class OcProblem:
    """Callback bundle defining a control problem.

    Parameters
    ----------
    state_dim, control_dim : dimensions d and m.
    dynamics : f(x, u) -> (d,) state derivative.
    running_cost : h(x, u) -> scalar.
    end_cost : terminal cost of the final state, (d,) -> scalar.
    dynamics_jac_x, dynamics_jac_u : Jacobians of f; finite-difference
        fallbacks are installed when None.
    running_cost_grad_x, running_cost_grad_u : gradients of h; same fallback.
    end_cost_grad : gradient of the end cost; same fallback.
    control_project : idempotent map onto the admissible control set;
        identity when the controls are unconstrained.
    closed_form_argmax : optional analytic maximizer of the regularized
        step Hamiltonian.  Called as
        ``(pair, x, lam_next, u_init, q, p, rho, tau) -> (s, m) array``
        and may return None when it does not apply to the given tableau,
        in which case the numeric maximizer is used.
    lipschitz_K : declared Lipschitz bound, used only by the step-size check.
    """

    state_dim: int
    control_dim: int
    dynamics: Callable
    running_cost: Callable
    end_cost: Callable
    dynamics_jac_x: Optional[Callable] = None
    dynamics_jac_u: Optional[Callable] = None
    running_cost_grad_x: Optional[Callable] = None
    running_cost_grad_u: Optional[Callable] = None
    end_cost_grad: Optional[Callable] = None
    control_project: Callable = _identity_projection
    closed_form_argmax: Optional[Callable] = None
    lipschitz_K: float = 1.0

    def __post_init__(self):
        if self.state_dim < 1 or self.control_dim < 1:
            raise ValueError("state_dim and control_dim must be positive")
        if self.lipschitz_K <= 0.0:
            raise ValueError("lipschitz_K must be positive")
        fallbacks = {
            "dynamics_jac_x": _fd_jacobian(self.dynamics, 0),
            "dynamics_jac_u": _fd_jacobian(self.dynamics, 1),
            "running_cost_grad_x": _fd_gradient(self.running_cost, 0),
            "running_cost_grad_u": _fd_gradient(self.running_cost, 1),
            "end_cost_grad": _fd_gradient(self.end_cost, 0),
        }
        for name, fb in fallbacks.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, fb)


@dataclass(frozen=True)
class ControlGrid:
    """Stage controls U_{i,n}, the fixed-point variable of the iteration.

    ``values`` has shape (N, s, m): N time steps, s stages, m control
    components.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise DimensionMismatchError(
                f"control grid must have shape (N, s, m), got {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def stages(self) -> int:
        return self.values.shape[1]

    @property
    def control_dim(self) -> int:
        return self.values.shape[2]

    @classmethod
    def zeros(cls, steps: int, stages: int, control_dim: int) -> "ControlGrid":
        return cls(np.zeros((steps, stages, control_dim)))

    def project(self, problem: OcProblem) -> "ControlGrid":
        """Project every stage value onto the admissible set."""
        out = np.empty_like(self.values)
        for n in range(self.values.shape[0]):
            for i in range(self.values.shape[1]):
                out[n, i] = problem.control_project(self.values[n, i])
        return ControlGrid(out)

    def is_admissible(self, problem: OcProblem, tol: float = 0.0) -> bool:
        """True when every stage value is a fixed point of the projection."""
        for n in range(self.values.shape[0]):
            for i in range(self.values.shape[1]):
                u = self.values[n, i]
                if np.max(np.abs(problem.control_project(u) - u)) > tol:
                    return False
        return True


@dataclass(frozen=True)
class TrajectoryPair:
    """Grid and stage values of the state/adjoint sweeps on a uniform grid.

    ``states`` holds x_n for n = 0..N and ``stage_states`` the X_{i,n}.
    The adjoint arrays (lambda_n, Lambda_{i,n}, and the stage slopes
    G_{i,n} of the adjoint recursion) are None until a backward sweep has
    filled them.  ``consistent`` is set once both sweeps have satisfied
    the stage equations to the solver tolerance.
    """

    states: np.ndarray
    stage_states: np.ndarray
    tau: float
    horizon: float
    adjoints: Optional[np.ndarray] = None
    stage_adjoints: Optional[np.ndarray] = None
    stage_adjoint_slopes: Optional[np.ndarray] = None
    consistent: bool = False

    def __post_init__(self):
        n_steps = self.stage_states.shape[0]
        if self.states.shape[0] != n_steps + 1:
            raise DimensionMismatchError(
                f"{self.states.shape[0]} grid states for {n_steps} steps"
            )
        if abs(self.tau * n_steps - self.horizon) > 1e-12 * max(1.0, abs(self.horizon)):
            raise DimensionMismatchError(
                f"tau * N = {self.tau * n_steps!r} does not match horizon {self.horizon!r}"
            )

    @property
    def steps(self) -> int:
        return self.stage_states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.steps + 1)


def discrete_cost(problem: OcProblem, traj: TrajectoryPair, u: ControlGrid, b) -> float:
    """Discrete cost: end cost of x_N plus the b-weighted stage quadrature.

    Returns ``end_cost(x_N) + tau * sum_n sum_i b_i h(X_{i,n}, U_{i,n})``.
    The trajectory's state part must be consistent with ``u`` under the
    tableau that produced it; only shapes are checked here.
    """
    b = np.asarray(b, dtype=float)
    n_steps, stages, m = u.values.shape
    if traj.steps != n_steps or traj.stage_states.shape[1] != stages:
        raise DimensionMismatchError(
            f"trajectory ({traj.steps} steps, {traj.stage_states.shape[1]} stages) "
            f"does not match control grid ({n_steps} steps, {stages} stages)"
        )
    if m != problem.control_dim or traj.states.shape[1] != problem.state_dim:
        raise DimensionMismatchError("grid dimensions do not match the problem")
    if b.shape != (stages,):
        raise DimensionMismatchError(f"expected {stages} weights, got {b.shape}")
    running = 0.0
    for n in range(n_steps):
        for i in range(stages):
            running += b[i] * problem.running_cost(traj.stage_states[n, i], u.values[n, i])
    return float(problem.end_cost(traj.states[-1]) + traj.tau * running)


def control_update_norm(u_new: ControlGrid, u_old: ControlGrid) -> float:
    """Stopping functional: sum over steps of the Euclidean norm of the
    stacked stage-control update."""
    if u_new.values.shape != u_old.values.shape:
        raise DimensionMismatchError(
            f"control grids have shapes {u_new.values.shape} and {u_old.values.shape}"
        )
    diff = u_new.values - u_old.values
    per_step = np.sqrt(np.sum(diff * diff, axis=(1, 2)))
    return float(per_step.sum())


def derivative_check(
    problem: OcProblem,
    rng: np.random.Generator,
    n_points: int = 30,
    scale: float = 1.0,
    rtol: float = 1e-6,
) -> float:
    """Self-check: compare the declared derivatives against central
    differences of f, h, and the end cost at random points.

    Returns the worst relative error over all sampled points and raises
    AssertionError when it exceeds ``rtol``.
    """
    d, m = problem.state_dim, problem.control_dim
    fd_fx = _fd_jacobian(problem.dynamics, 0)
    fd_fu = _fd_jacobian(problem.dynamics, 1)
    fd_hx = _fd_gradient(problem.running_cost, 0)
    fd_hu = _fd_gradient(problem.running_cost, 1)
    fd_phix = _fd_gradient(problem.end_cost, 0)
    worst = 0.0
    for _ in range(n_points):
        x = scale * rng.standard_normal(d)
        u = scale * rng.standard_normal(m)
        pairs = [
            (problem.dynamics_jac_x(x, u), fd_fx(x, u)),
            (problem.dynamics_jac_u(x, u), fd_fu(x, u)),
            (problem.running_cost_grad_x(x, u), fd_hx(x, u)),
            (problem.running_cost_grad_u(x, u), fd_hu(x, u)),
            (problem.end_cost_grad(x), fd_phix(x)),
        ]
        for declared, fd in pairs:
            declared = np.asarray(declared, dtype=float)
            denom = max(1.0, float(np.max(np.abs(fd))))
            worst = max(worst, float(np.max(np.abs(declared.reshape(fd.shape) - fd))) / denom)
    if worst > rtol:
        raise AssertionError(
            f"declared derivatives disagree with finite differences: "
            f"relative error {worst:.3e} > {rtol:.0e}"
        )
    return worst
