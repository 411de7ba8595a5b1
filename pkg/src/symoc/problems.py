"""Built-in benchmark problems.

The double-well oscillator is the nonlinear benchmark: a damped particle
in the potential q^4/4 - q^2/2 with the control forcing the velocity,
steered from the left well toward the right one at cost
(alpha/2)|x(T) - target|^2 + integral of u^2/2.  The scalar LQ problem
is the analytically solvable oracle used for validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import OcProblem
from .errors import ConfigError


@dataclass(frozen=True)
class DoubleWellParams:
    damping: float = 1.0
    terminal_weight: float = 10.0
    target: Tuple[float, float] = (1.0, 0.0)
    initial_state: Tuple[float, float] = (-1.0, 0.0)
    horizon: float = 6.0

    def __post_init__(self):
        if self.damping < 0.0:
            raise ValueError("damping must be nonnegative")
        if self.terminal_weight <= 0.0:
            raise ValueError("terminal_weight must be positive")


def make_double_well(params: DoubleWellParams = DoubleWellParams()) -> OcProblem:
    """Controlled damped oscillator in a double-well potential.

    State (q, p): position and velocity.  Dynamics
    (p, q - q^3 - damping * p + u) with the scalar control acting on the
    velocity only.  The analytic maximizer covers the one-stage explicit
    pair, for which the regularized step Hamiltonian is an exactly
    solvable concave quadratic in u; other tableaux fall back to the
    numeric maximizer.
    """
    nu = params.damping
    alpha = params.terminal_weight
    target = np.asarray(params.target, dtype=float)

    def dynamics(x, u):
        return np.array([x[1], x[0] - x[0] ** 3 - nu * x[1] + u[0]])

    def dynamics_jac_x(x, u):
        return np.array([[0.0, 1.0], [1.0 - 3.0 * x[0] ** 2, -nu]])

    def dynamics_jac_u(x, u):
        return np.array([[0.0], [1.0]])

    def running_cost(x, u):
        return 0.5 * u[0] ** 2

    def running_cost_grad_x(x, u):
        return np.zeros(2)

    def running_cost_grad_u(x, u):
        return np.array([u[0]])

    def end_cost(x):
        diff = x - target
        return 0.5 * alpha * float(diff @ diff)

    def end_cost_grad(x):
        return alpha * (x - target)

    def closed_form_argmax(pair, x, lam_next, u_init, q, p, rho, tau):
        # quadratic in u only for the one-stage explicit pair (stage = grid point)
        if pair.s != 1 or pair.A[0, 0] != 0.0:
            return None
        drift_gap = q[1] - (x[0] - x[0] ** 3 - nu * x[1])
        u_star = (lam_next[1] + rho * drift_gap) / (1.0 + rho)
        return np.array([[u_star]])

    return OcProblem(
        state_dim=2,
        control_dim=1,
        dynamics=dynamics,
        dynamics_jac_x=dynamics_jac_x,
        dynamics_jac_u=dynamics_jac_u,
        running_cost=running_cost,
        running_cost_grad_x=running_cost_grad_x,
        running_cost_grad_u=running_cost_grad_u,
        end_cost=end_cost,
        end_cost_grad=end_cost_grad,
        closed_form_argmax=closed_form_argmax,
        lipschitz_K=12.0,
    )


def double_well_energy(states) -> np.ndarray:
    """Total energy p^2/2 + q^4/4 - q^2/2 along an array of states.

    The saddle between the wells sits at energy zero, so an optimal path
    that switches wells must cross that level.
    """
    states = np.asarray(states, dtype=float)
    position = states[..., 0]
    velocity = states[..., 1]
    return 0.5 * velocity**2 + 0.25 * position**4 - 0.5 * position**2


@dataclass(frozen=True)
class LqParams:
    initial_state: float = 1.0
    horizon: float = 1.0


def make_lq(params: LqParams = LqParams()) -> OcProblem:
    """Scalar oracle problem: f = u, h = u^2/2, end cost x(T)^2/2.

    The continuous optimum is the constant control -xi / (1 + T) with
    cost xi^2 / (2 (1 + T)); because neither f nor h depends on x, the
    discrete optimum coincides with it for every consistent tableau.
    The analytic maximizer is valid for all tableaux for the same
    reason.
    """

    def dynamics(x, u):
        return np.array([u[0]])

    def dynamics_jac_x(x, u):
        return np.zeros((1, 1))

    def dynamics_jac_u(x, u):
        return np.ones((1, 1))

    def running_cost(x, u):
        return 0.5 * u[0] ** 2

    def running_cost_grad_x(x, u):
        return np.zeros(1)

    def running_cost_grad_u(x, u):
        return np.array([u[0]])

    def end_cost(x):
        return 0.5 * x[0] ** 2

    def end_cost_grad(x):
        return np.array([x[0]])

    def closed_form_argmax(pair, x, lam_next, u_init, q, p, rho, tau):
        u_star = (lam_next[0] + rho * q[0]) / (1.0 + rho)
        return np.full((pair.s, 1), u_star)

    return OcProblem(
        state_dim=1,
        control_dim=1,
        dynamics=dynamics,
        dynamics_jac_x=dynamics_jac_x,
        dynamics_jac_u=dynamics_jac_u,
        running_cost=running_cost,
        running_cost_grad_x=running_cost_grad_x,
        running_cost_grad_u=running_cost_grad_u,
        end_cost=end_cost,
        end_cost_grad=end_cost_grad,
        closed_form_argmax=closed_form_argmax,
        lipschitz_K=1.0,
    )


def lq_optimal_control(params: LqParams) -> float:
    return -params.initial_state / (1.0 + params.horizon)


def lq_optimal_cost(params: LqParams) -> float:
    return params.initial_state**2 / (2.0 * (1.0 + params.horizon))


PROBLEM_NAMES = ("double-well", "lq")


def from_config(obj: dict, horizon: float):
    """Build (problem, initial_state, params) from a run-config block.

    The grid block owns the horizon; the problem block carries the
    physics parameters and the initial state.
    """
    if "name" not in obj:
        raise ConfigError("problem block needs a 'name'")
    name = obj["name"]
    options = {k: v for k, v in obj.items() if k != "name"}
    if name == "double-well":
        allowed = {"damping", "terminal_weight", "target", "initial_state"}
        unknown = set(options) - allowed
        if unknown:
            raise ConfigError(f"unknown double-well options: {sorted(unknown)}")
        params = DoubleWellParams(
            damping=float(options.get("damping", 1.0)),
            terminal_weight=float(options.get("terminal_weight", 10.0)),
            target=tuple(options.get("target", (1.0, 0.0))),
            initial_state=tuple(options.get("initial_state", (-1.0, 0.0))),
            horizon=horizon,
        )
        return make_double_well(params), np.asarray(params.initial_state, dtype=float), params
    if name == "lq":
        allowed = {"initial_state"}
        unknown = set(options) - allowed
        if unknown:
            raise ConfigError(f"unknown lq options: {sorted(unknown)}")
        params = LqParams(initial_state=float(options.get("initial_state", 1.0)), horizon=horizon)
        return make_lq(params), np.array([params.initial_state]), params
    raise ConfigError(f"unknown problem {name!r}; built-ins: {PROBLEM_NAMES}")
