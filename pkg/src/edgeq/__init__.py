"""Edge-vs-cloud queueing trade-off toolkit.

Closed-form latency and capacity formulas for distributed edge clouds
with user mobility, plus the discrete-event and VM-packing simulators
that validate them. See the README for the CLI and scenario harness.
"""

from .analytic import (
    aggregate_cloud_profile,
    delta_t_bound_ggk,
    delta_t_bound_mmk,
    destination_wait,
    effective_service_rate,
    empirical_rule_capacities,
    erlang_c_wait,
    excess_wait_sinusoidal,
    fluid_backlog,
    gg1_two_phase_wait,
    ggk_cloud_wait,
    max_edge_arrival_scv,
    migration_service_time,
    mm1_source_wait,
    mm1_two_phase_wait,
    mmk_qed_wait,
    offered_load_lag,
    overload_window,
    psa_cloud_wait,
    rush_hour_wait,
    service_scv,
    sinusoidal_offered_load,
    sinusoidal_wait_profile,
)
from .capacity import (
    PackingReport,
    Topology,
    VmRequest,
    cloud_capacity_equivalent,
    dtrp_response_time,
    edge_overprovision_factor,
    load_vm_trace,
    simulate_packing,
    synthetic_vm_trace,
)
from .desim import SimConfig, SimMetrics, TimeSeriesMetrics, replicate, run_mmk_sim, run_mtm1_sim, run_two_phase_sim
from .errors import (
    ConfigError,
    DomainError,
    EdgeqError,
    EmptyTrace,
    IncompatiblePeriods,
    InstabilityDetected,
    OversizedVm,
    OverloadedInstant,
    ParseError,
    UnreachableScv,
    UnstableQueue,
)
from .harness import ComparisonRow, Scenario, load_scenario, run_scenario, table_rush_hour
from .specs import (
    CloudSpec,
    DtrpSpec,
    NetworkSpec,
    PhaseMoments,
    QueueSpec,
    SinusoidProfile,
    VariabilitySpec,
)
from .workload import (
    RenewalSpec,
    SeededStream,
    nhpp_sinusoidal,
    phase_shifted_sites,
    poisson_arrivals,
    renewal_times,
)

__version__ = "0.1.0"
