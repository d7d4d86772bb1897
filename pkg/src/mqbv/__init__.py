"""Modified quasi-boundary value regularization for backward semilinear
parabolic problems ``u_t + mu(t) A u = f(t, u)``, ``u(T) = u_T``, on the
1-D Dirichlet Laplacian, with numerical checks of its stability and
convergence estimates."""

from .errors import (
    ConfigError,
    ConstructionError,
    DimensionError,
    DomainError,
    EvaluationError,
    IterationDivergenceError,
    MQBVError,
    OracleAccuracyError,
)
from .experiments import (
    ErrorReport,
    NoiseModel,
    StabilityReport,
    SweepPlan,
    fit_rate,
    illposed_demo,
    inject_noise,
    run_convergence_sweep,
    run_stability_experiment,
    stability_factor,
    theoretical_rate,
)
from .filters import (
    FilterParams,
    lemma1_bound,
    lemma2_bound,
    lemma3_bound,
    lemma3_bound_general,
    phi_filter,
)
from .problem import (
    DiffusionProfile,
    ManufacturedProblem,
    TruncatedSource,
    TruncationSchedule,
    catalog,
    default_truncation_schedule,
    fisher_problem,
    linear_problem,
    lipschitz_constant,
    make_manufactured,
    mu_bar,
    truncate_source,
)
from .solver import (
    SolverConfig,
    TimeGrid,
    TrajectorySolution,
    forward_solve,
    naive_backward,
    picard_residual,
    solve_exact_data,
    solve_regularized,
)
from .spectral import (
    EigenBasis,
    GevreyParams,
    SpectralField,
    apply_operator_power,
    gevrey_norm,
    semigroup_apply,
)

__version__ = "0.1.0"
