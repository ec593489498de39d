"""Three-layer sandwich beam laboratory.

Simulates two longitudinal wave layers coupled to a transverse bending
layer under (a) time-varying delayed boundary velocity feedback and (b)
dynamic boundary controls, verifies the energy decay and observability
structure at the discrete level, and synthesizes null controls by
conjugate gradient on the control Gramian.
"""

from .params import (
    PhysicalParams,
    ConstantDelay,
    SinusoidalDelay,
    DelaySpec,
    ConstantDamping,
    ExponentialDamping,
    DampingSpec,
    GainConfig,
)
from .hypotheses import (
    BoundaryQuadForm,
    HypothesisReport,
    TheoreticalRates,
    InfeasibleRates,
    phi_matrix,
    is_negative_definite,
    validate_gains,
    select_mus,
    decay_bound,
)
from .discretize import (
    VARIANT_STABILIZED,
    VARIANT_CONTROLLED,
    Grid1D,
    DofLayout,
    SemiDiscreteSystem,
    DiscreteState,
    build_system,
    discrete_energy,
    hspace_norm,
    export_matrices,
)
from .delayline import (
    LookupBeforeHistory,
    TraceHistory,
    init_history,
    push,
    eval_delayed,
    z_profile,
)
from .timestep import (
    SchemeConfig,
    SimOutput,
    IntegrationError,
    step_damped_delayed,
    step_conservative_controlled,
    simulate,
)
from .decay import (
    DecayReport,
    check_dissipation_identity,
    lyapunov_trace,
    fit_decay_rate,
    check_theoretical_bound,
    check_trace_estimates,
)
from .hum import (
    ObservationTriple,
    HumSolution,
    CgError,
    HumWorkspace,
    solve_adjoint,
    controls_from_observation,
    apply_gramian,
    rhs_from_initial_data,
    cg_solve,
    compute_null_control,
    estimate_observability,
)

__version__ = "0.1.0"
