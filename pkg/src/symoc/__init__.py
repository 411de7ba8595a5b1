"""symoc: optimal control by regularized forward-backward sweeps on
symplectic Runge-Kutta discretizations."""

from .acceleration import AndersonConfig, anderson_step, run_accelerated
from .core import (
    ControlGrid,
    OcProblem,
    TrajectoryPair,
    control_update_norm,
    derivative_check,
    discrete_cost,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    PsiSolveError,
    StageDivergenceError,
    StepSizeWarning,
    SymocError,
    TableauError,
)
from .iteration import (
    IterationRecord,
    MaximizerConfig,
    RegularizationConfig,
    SweepReport,
    augmented_hamiltonian,
    maximize_step_control,
    run_iteration,
)
from .oracle import direct_minimize, fd_cost_gradient, sweep_cost
from .problems import (
    DoubleWellParams,
    LqParams,
    double_well_energy,
    lq_optimal_cost,
    lq_optimal_control,
    make_double_well,
    make_lq,
)
from .sweep import (
    StageSolveConfig,
    backward_sweep,
    forward_sweep,
    hamiltonian_tau,
    hamiltonian_tau_grad_u,
    hamiltonian_tau_grad_x,
    pmp_residuals,
    reduced_step,
)
from .tableau import (
    ButcherPair,
    StepSizeCheck,
    check_step_size,
    from_config,
    implicit_midpoint,
    make_adjoint_pair,
    symplectic_euler,
)

__version__ = "0.1.0"
