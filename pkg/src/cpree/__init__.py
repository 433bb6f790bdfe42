"""Event-driven Monte Carlo laboratory for the contact process in a
randomly evolving environment on finite boxes of Z^d."""

from .events import (
    Params,
    Box,
    Event,
    EventKind,
    EventLog,
    build_event_log,
    from_events,
    direction_vector,
)
from .background import (
    Configuration,
    InitLaw,
    all_sites,
    background_path,
    background_transition_prob,
    infected_array,
    phi_field,
    sample_initial,
)
from .dynamics import (
    BoundaryStats,
    Trajectory,
    active_path_exists,
    boundary_stats,
    coupled_simulate,
    extinction_lower_bound,
    extinction_lower_bound_sides,
    simulate,
)
from .oracle import (
    GeneratorMatrix,
    build_generator,
    exact_event_prob,
    transient_distribution,
)
from .estimators import (
    Estimate,
    OrthantReport,
    ScanResult,
    check_orthant_inequalities,
    estimate_duality_residual,
    estimate_fstc,
    estimate_survival,
    estimate_truncated_occupancy,
    estimate_upper_density,
    estimate_upper_density_curve,
    scan_critical,
    wilson_interval,
)
from .renorm import (
    BlockGeometry,
    RenormField,
    build_block_geometry,
    build_renorm_field,
    domination_report,
    estimate_block_event,
    estimate_box_coverage,
    lss_density_threshold,
    op_survival,
    op_survival_exact,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
