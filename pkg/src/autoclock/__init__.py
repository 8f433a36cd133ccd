"""Clock-driven quantum engine simulator.

Subpackages by concern:
    operators  finite-dimensional operator algebra and entropies
    clock      split-step dynamics of the engine (x) clock system
    weight     translation-invariant channels over the weight momentum
    thermo     ledger and first/second-law audits
    protocol   three-stage optimal state transformations
    cli        config-driven experiment runner (console script `autoclock`)
"""

__version__ = "0.1.0"

from .operators import (  # noqa: F401
    DensityMatrix,
    Operator,
    SubsystemLayout,
    evolve,
    free_energy,
    partial_trace,
    tensor,
    thermal_state,
    trace_norm_distance,
    von_neumann_entropy,
)
from .clock import (  # noqa: F401
    ClockGrid,
    ClockState,
    CrossingReport,
    EngineSpec,
    InteractionWindow,
    build_total_hamiltonian,
    crossing_report,
    gaussian_clock_state,
    interaction_generator,
    momentum_operator,
    propagate,
)
from .weight import (  # noqa: F401
    ChannelReport,
    SystemSpec,
    WeightDistribution,
    apply_weight_channel,
    channel_error,
    gauss_hermite_weight,
    momentum_unitary_family,
    rescale_distribution,
)
from .thermo import (  # noqa: F401
    MixtureKernel,
    ThermoLedger,
    audit_entropy_monotone,
    audit_first_law,
    audit_second_law,
    ledger_from_states,
    mixture_reduced_dynamics,
)
from .protocol import (  # noqa: F401
    ProtocolReport,
    StaircaseStep,
    TransformTask,
    build_staircase,
    regularize_target,
    run_protocol,
    stage1,
    stage2_execute,
    stage3,
)
