"""Exception types shared across the package."""


class SymocError(Exception):
    """Base class for all errors raised by symoc."""


class DimensionMismatchError(SymocError):
    """Shapes of grids, trajectories and problem dimensions disagree."""


class TableauError(SymocError):
    """Invalid Butcher coefficients (inconsistent or non-positive weights)."""


class StageDivergenceError(SymocError):
    """The implicit stage iteration failed to reach its residual tolerance."""

    def __init__(self, step: int, residual: float, tol: float):
        self.step = step
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"stage divergence at step {step}: residual {residual:.3e} "
            f"did not reach tolerance {tol:.3e}"
        )


class PsiSolveError(SymocError):
    """The stage sensitivity linear system is singular ("Psi solve failure")."""


class ConfigError(SymocError):
    """A run configuration file failed validation."""


class StepSizeWarning(UserWarning):
    """The step size violates the contraction bound for an implicit pair."""
