"""Lie-bracket sampled-feedback stabilization toolkit.

Formal bracket combinatorics, oriented bang-bang schedules, multiflow
integration, multirank-scaled sampling processes, and checkers for sampled
stabilizability and asymptotic controllability with regulated cost.
"""

from .brackets import (
    BracketError,
    BracketParseError,
    BracketValidationError,
    ControlLabel,
    FormalBracket,
    Letter,
    Pair,
    SmoothnessBudget,
    degree,
    factorize,
    letters,
    parse_bracket,
    render_bracket,
    smoothness_budget,
    switch_number,
    tree_depth,
)
from .certify import (
    Certificate,
    CertificateConfigError,
    CheckReport,
    ConditionResult,
    GacStage,
    GacWitness,
    GridEnvelope,
    RunRecord,
    WitnessConstructionError,
    build_phi,
    check_gac,
    check_sample_stab_degree_k,
    check_stabilizability,
    construct_gac_witness,
    d_lower_envelope,
    default_state_sampler,
    witness_cost_audit,
)
from .families import (
    BilateralSeq,
    CostSplit,
    GrowthMap,
    MonotoneMap,
    MultirankMap,
    StateNorm,
    TimeBudget,
    affine_diff_budget,
    affine_growth,
    const_growth,
    geometric_seq,
    identity_map,
    max_power_map,
    min_power_map,
    per_degree_multirank,
    power_map,
    ratio_budget,
    shifted_map,
)
from .fields import (
    BracketEvaluation,
    PolyVectorField,
    bracket_evaluations,
    evaluate_bracket,
    fd_bracket_oracle,
    fd_label_oracle,
    label_field,
    lie_bracket,
)
from .flows import (
    DEFAULT_OPTIONS,
    STATUS_ALIVE,
    STATUS_BLOWN_UP,
    STATUS_REACHED,
    IntegrationOptions,
    OrderFit,
    TargetSet,
    Trajectory,
    asymptotic_order_check,
    integrate,
    multiflow,
)
from .sampling import (
    STATUS_HORIZON,
    STATUS_STOPPED,
    STEP_POLICIES,
    FeedbackGenerator,
    Lagrangian,
    Multirank,
    Partition,
    ProcessStepError,
    SamplingProcess,
    StepRecord,
    audit_rank_partition,
    audit_scaled_process,
    make_rank_partition,
    make_scaled_partition,
    rank_step_band,
    run_rank_process,
    run_sampling_process,
    scaled_step_band,
    trajectory_cost,
)
from .schedules import (
    Schedule,
    Segment,
    build_schedule,
    control_plan,
    fraction_slices,
    sample_control,
)
from .systems import (
    BenchmarkSystem,
    RankCertificate,
    brockett_generator,
    brockett_system,
    check_hypotheses,
    load_system,
    scalar_linear_system,
    scalar_sign_generator,
    system_from_json_dict,
)

__version__ = "0.1.0"
