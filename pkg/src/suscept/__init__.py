"""Structural susceptibility of the van der Pol oscillator.

The package measures how strongly the oscillator's limit cycle responds to
polynomial perturbations of its equations of motion: the eigen-spectrum of
the Hessian of the least-squares distance between perturbed and
unperturbed trajectories, evaluated at zero perturbation and scanned
across the time-scale-separation parameter mu.  Stiff eigendirections
perturb the slow manifold; sloppy ones only touch the fast jumps, and the
spectrum spreads dramatically as the time scales separate.
"""

from .dynamics import (
    ModelConfig,
    PerturbationIndex,
    enumerate_parameters,
    jacobian_params,
    jacobian_state,
    param_count,
    rhs,
    slow_count,
    zero_parameters,
)
from .ode import (
    DEFAULT_SETTINGS,
    IntegrationError,
    IntegratorSettings,
    NoCrossing,
    NonFiniteState,
    StepLimitExceeded,
    Trajectory,
    find_crossing,
    integrate,
)
from .orbit import LimitCycle, NoConvergence, find_cycle, measure_period, settle
from .scan import (
    ConfigError,
    DEFAULT_MU_GRID,
    MuPointRecord,
    OracleCheck,
    ScanConfig,
    ScanReport,
    run_mu_point,
    run_scan,
    run_validation,
)
from .sensitivity import (
    CorrectionCoefficients,
    SensitivityBundle,
    SingularConstraint,
    correction_matrix,
    floquet_defect,
    integrate_variational,
    solve_corrections,
    total_jacobian_basis,
)
from .susceptibility import (
    Eigencycle,
    Eigenprediction,
    EigenSystem,
    Hessian,
    PowerLawFit,
    assemble_hessian,
    cost_oracle,
    default_output_grid,
    eigencycles,
    eigendecompose,
    eigenpredictions,
    fit_power_laws,
    prediction_gram,
)

__version__ = "0.1.0"
