"""Radial solutions of P_k^+ U + g(U) = 0 for bistable g."""

from .builder import (
    BuildError,
    Classification,
    RadialSolution,
    Segment,
    SwitchEvent,
    build_radial,
    classify,
    solve_minus,
    starting_regime,
    verify_residual,
)
from .config import SolveConfig
from .critical import (
    ThresholdSet,
    bisect_boundary,
    classify_r0,
    compute_thresholds,
    k1_threshold_check,
    r0_bounds,
    r0_of_xi,
    xi_of_r0,
    xi_star,
)
from .foe import (
    foe_blowup_radius,
    foe_closed,
    foe_diagnostics,
    foe_switch_radius,
    foe_trajectory,
    h_integral,
)
from .nonlinearity import (
    Nonlinearity,
    make_cubic,
    make_custom,
    make_scaled_cubic,
    parse_nonlinearity,
    validate_bistable,
)
from .soe import (
    k1_amplitude_and_period,
    k1_classify,
    k2_decay_envelope,
    soe_energy_audit,
    soe_integrate,
    soe_switch_event,
)

__version__ = "0.1.0"
