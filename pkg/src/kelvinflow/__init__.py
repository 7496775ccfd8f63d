"""Transport gradient flow on the periodic cube, with its matrix-flow,
assignment-problem and dissipation-inequality companions."""

from .spectral import (
    PeriodicGrid,
    ScalarField,
    VectorField,
    dealias,
    divergence,
    gradient,
    inverse_laplacian_pow,
    l2_inner,
    l2_norm,
    laplacian_pow,
    leray_project,
    restrict_to,
)
from .law import EmpiricalLaw, dirichlet_energy, empirical_law, kinetic_K, law_distance
from .flow import (
    CflError,
    FlowConfig,
    FlowDivergedError,
    FlowState,
    Trajectory,
    advect,
    compute_drive,
    compute_velocity,
    initial_condition,
    initial_state,
    simulate,
    state_from_phi,
    stationarity_residual,
    step,
)
from .brockett import (
    BrockettState,
    brockett_integrate,
    brockett_rhs,
    convergence_step,
    default_q,
    random_symmetric,
    spectrum_drift,
)
from .assignment import (
    Permutation,
    QAPInstance,
    build_lattice_weights,
    lap_bruteforce,
    lap_solve,
    lattice_dirichlet_sum,
    mk2_distance,
    qap_bruteforce,
    qap_cost_from_values,
    qap_local_search,
    qap_objective,
)
from .checks import (
    StabilityReport,
    TestField,
    admissible_r,
    dissipative_residual,
    make_test_field,
    relative_entropy,
    restrict_trajectory,
    sym_gradient_eig_range,
    weak_strong_check,
    zero_test_field,
)
from .io import (
    ConfigError,
    RunConfig,
    SnapshotError,
    parse_config,
    read_ledger,
    read_snapshot,
    read_trajectory,
    write_ledger,
    write_snapshot,
    write_trajectory,
)

__version__ = "0.1.0"
