"""Butcher tableaux and construction of symplectic adjoint pairs.

A forward tableau (A, b) is paired with the adjoint tableau whose
coefficients are ``a~_ij = b_j - b_j a_ji / b_i``.  Applying (A, b) to the
state recursion and (A~, b) to the adjoint recursion yields a symplectic
partitioned map, characterised by the residual identity

    b_i a~_ij + b_j a_ji - b_i b_j = 0   for all i, j.

Weights must be positive: the adjoint coefficients divide by ``b_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TableauError

#: residual tolerance for the symplecticity identity
SYMPLECTIC_TOL = 1e-14

#: tolerance for the consistency condition sum(b) == 1
CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class ButcherPair:
    """A forward tableau together with its symplectic adjoint tableau.

    Attributes
    ----------
    s : number of stages.
    A : (s, s) forward coefficients a_ij.
    b : (s,) quadrature weights, positive and summing to one.
    A_tilde : (s, s) adjoint coefficients a~_ij.
    explicit : True when A is strictly lower triangular.
    """

    s: int
    A: np.ndarray
    b: np.ndarray
    A_tilde: np.ndarray
    explicit: bool

    def symplecticity_residual(self) -> float:
        """Max over (i, j) of |b_i a~_ij + b_j a_ji - b_i b_j|."""
        b = self.b
        r = b[:, None] * self.A_tilde + (b[:, None] * self.A).T - np.outer(b, b)
        return float(np.max(np.abs(r)))


def make_adjoint_pair(A, b) -> ButcherPair:
    """Build the symplectic pair for forward coefficients (A, b).

    Raises
    ------
    TableauError
        "inconsistent weights" when sum(b) differs from 1 beyond 1e-12,
        "non-positive weight" when any b_i <= 0 (the adjoint coefficients
        divide by b_i).
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    if b.ndim != 1 or A.shape != (b.size, b.size):
        raise TableauError(f"tableau shapes disagree: A {A.shape}, b {b.shape}")
    s = b.size
    if abs(b.sum() - 1.0) > CONSISTENCY_TOL:
        raise TableauError(f"inconsistent weights: sum(b) = {b.sum()!r}, expected 1")
    if np.any(b <= 0.0):
        raise TableauError("non-positive weight: all b_i must be > 0")
    A_tilde = b[None, :] - (b[None, :] * A.T) / b[:, None]
    explicit = bool(np.all(np.abs(np.triu(A)) == 0.0))
    return ButcherPair(s=s, A=A, b=b, A_tilde=A_tilde, explicit=explicit)


def symplectic_euler() -> ButcherPair:
    """First-order explicit pair: A = [[0]], b = [1], adjoint A~ = [[1]]."""
    return make_adjoint_pair([[0.0]], [1.0])


def implicit_midpoint() -> ButcherPair:
    """Second-order self-adjoint pair: A = [[1/2]], b = [1]."""
    return make_adjoint_pair([[0.5]], [1.0])


NAMED_TABLEAUX = {
    "symplectic-euler": symplectic_euler,
    "implicit-midpoint": implicit_midpoint,
}


def from_config(obj: dict) -> ButcherPair:
    """Build a pair from its run-config form.

    Accepts ``{"name": "symplectic-euler"}`` for a built-in tableau or
    ``{"s": n, "A": [[...]], "b": [...]}`` for arbitrary coefficients.
    """
    if "name" in obj:
        name = obj["name"]
        if name not in NAMED_TABLEAUX:
            raise TableauError(
                f"unknown tableau {name!r}; built-ins: {sorted(NAMED_TABLEAUX)}"
            )
        return NAMED_TABLEAUX[name]()
    try:
        s, A, b = obj["s"], obj["A"], obj["b"]
    except KeyError as exc:
        raise TableauError(f"tableau config missing key {exc}") from exc
    pair = make_adjoint_pair(A, b)
    if pair.s != int(s):
        raise TableauError(f"tableau config claims s={s} but coefficients have s={pair.s}")
    return pair


@dataclass(frozen=True)
class StepSizeCheck:
    """Result of the contraction bound check for the stage equations."""

    ok: bool
    tau_max: float
    message: str


def check_step_size(pair: ButcherPair, lipschitz_k: float, tau: float) -> StepSizeCheck:
    """Check tau against the bound tau <= 1 / (K max_ij |a_ij|).

    Explicit pairs always pass (the stage system is triangular).  For
    implicit pairs a violated bound is advisory: the fixed-point stage
    solver may fail to contract.
    """
    if lipschitz_k <= 0.0 or tau <= 0.0:
        raise ValueError("lipschitz_k and tau must be positive")
    if pair.explicit:
        return StepSizeCheck(ok=True, tau_max=np.inf, message="explicit pair: no restriction")
    amax = float(np.max(np.abs(pair.A)))
    if amax == 0.0:
        return StepSizeCheck(ok=True, tau_max=np.inf, message="zero coefficients: no restriction")
    tau_max = 1.0 / (lipschitz_k * amax)
    if tau <= tau_max:
        return StepSizeCheck(ok=True, tau_max=tau_max, message="step size within contraction bound")
    return StepSizeCheck(
        ok=False,
        tau_max=tau_max,
        message=f"step size {tau:g} exceeds contraction bound {tau_max:g} "
        f"(K={lipschitz_k:g}, max|a_ij|={amax:g})",
    )
