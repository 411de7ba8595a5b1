"""Anderson acceleration of the control fixed-point iteration.

One outer sweep iteration defines a map F on control grids; the plain
driver iterates u <- F(u).  The accelerated driver combines a short
window of past (u, F(u)) pairs into the extrapolated iterate

    sum_j alpha_j F(u_j),  sum_j alpha_j = 1,

with the weights minimizing |sum_j alpha_j (F(u_j) - u_j)| in the least
squares sense (type-II mixing, solved through residual differences).

Restarts are rolling: every iterate, any history entry older than
``restart_every`` applications is discarded, so the mixing never uses
information more than ``restart_every`` iterations stale.  (Clearing
the whole history on a synchronized cadence instead locks the iteration
into restart-periodic limit cycles on nonlinear problems.)  Accelerated
runs trade the monotone cost decay of the plain iteration for speed;
the report still records the cost at every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ControlGrid, OcProblem
from .iteration import RegularizationConfig, _drive
from .sweep import StageSolveConfig
from .tableau import ButcherPair


@dataclass(frozen=True)
class AndersonConfig:
    """History depth, restart horizon, and least-squares regularization.

    ``window`` caps how many iterate pairs enter the least squares;
    ``restart_every`` is the rolling age limit beyond which history is
    discarded.  The regularization is relative to the Gram matrix, so
    the mixing stays active as residuals shrink.
    """

    window: int = 3
    restart_every: int = 3
    regularization: float = 1e-12
    enabled: bool = True

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.restart_every < 1:
            raise ValueError("restart_every must be at least 1")

    @property
    def depth(self) -> int:
        return min(self.window, self.restart_every)


def _combine(history, regularization):
    """Least-squares mixing of a history of (u, F(u)) vector pairs.

    Returns (iterate, ok); ok is False when the solve degenerates, in
    which case the caller should fall back to plain F(u) and restart.
    """
    fu_latest = history[-1][1]
    residuals = np.stack([fu - u for u, fu in history], axis=1)
    fvalues = np.stack([fu for _, fu in history], axis=1)
    dr = np.diff(residuals, axis=1)
    df = np.diff(fvalues, axis=1)
    gram = dr.T @ dr
    trace = float(np.trace(gram))
    if trace == 0.0 or not np.isfinite(trace):
        return fu_latest.copy(), False
    # Tikhonov term scaled to the Gram magnitude, so mixing stays active
    # as the residuals shrink
    gram += regularization * trace * np.eye(dr.shape[1])
    try:
        gamma = np.linalg.solve(gram, dr.T @ residuals[:, -1])
    except np.linalg.LinAlgError:
        return fu_latest.copy(), False
    if not np.all(np.isfinite(gamma)):
        return fu_latest.copy(), False
    return fu_latest - df @ gamma, True


def anderson_step(history, cfg: AndersonConfig) -> np.ndarray:
    """Next iterate from a history of (u, F(u)) pairs, oldest first.

    Entries are flattened control vectors; only the ``cfg.depth`` most
    recent ones enter the combination.  With a single entry or depth 1
    this reduces to plain fixed-point iteration F(u); on a degenerate
    least-squares problem it likewise falls back to F(u).
    """
    if len(history) == 0:
        raise ValueError("anderson_step needs a non-empty history")
    window = [(np.asarray(u, dtype=float).ravel(), np.asarray(fu, dtype=float).ravel())
              for u, fu in history[-cfg.depth :]]
    if len(window) < 2:
        return window[-1][1].copy()
    iterate, _ = _combine(window, cfg.regularization)
    return iterate


class _AndersonMixer:
    """Stateful rolling window of iterate pairs used by the driver."""

    def __init__(self, cfg: AndersonConfig):
        self.cfg = cfg
        self.history = []

    def apply(self, u_values: np.ndarray, fu_values: np.ndarray) -> np.ndarray:
        shape = u_values.shape
        self.history.append((u_values.ravel().copy(), fu_values.ravel().copy()))
        if len(self.history) > self.cfg.depth:
            self.history.pop(0)
        if len(self.history) < 2:
            return fu_values.copy()
        iterate, ok = _combine(self.history, self.cfg.regularization)
        if not ok:
            self.history.clear()
        return iterate.reshape(shape)


def run_accelerated(
    problem: OcProblem,
    pair: ButcherPair,
    xi,
    u0: ControlGrid,
    tau: float,
    n_steps: int,
    reg: RegularizationConfig,
    cfg: StageSolveConfig,
    anderson: AndersonConfig,
):
    """Accelerated counterpart of ``run_iteration``.

    With ``anderson.enabled`` False this reproduces the plain iterate
    sequence exactly.  Mixed iterates are projected back onto the
    admissible control set before the next sweep.
    """
    mixer = _AndersonMixer(anderson) if anderson.enabled else None
    return _drive(problem, pair, xi, u0, tau, n_steps, reg, cfg, mixer=mixer)
