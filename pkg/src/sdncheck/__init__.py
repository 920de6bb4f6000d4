"""sdncheck: explicit-state model checking for SDNs whose flow entries time out."""

from .model import (
    DROP,
    KEEP,
    UNSET,
    ConfigError,
    GlobalState,
    Packet,
    Rule,
    Topology,
    Workload,
    build_topology,
    build_workload,
    canonical_hash,
    initial_state,
)
from .semantics import Action, ModelContext, apply, enabled_actions, match_rule
from .controller import (
    BUILTIN_CONTROLLERS,
    ControllerProgram,
    builtin_program,
    check_order_sensitivity,
)
from .properties import (
    BUILTIN_PROPERTY,
    Property,
    builtin_phi,
    builtin_property,
    compile_property,
    parse_property,
)
from .por import PorContext, ample, audit_c1, audit_c4, commutation_oracle, is_safe
from .explorer import (
    ExplorationOptions,
    ExplorationReport,
    causal_audit,
    explore,
    reconstruct_trace,
    replay_trace,
)
from .cli import generate_topology, run_check, run_scaling_suite

__version__ = "0.1.0"
