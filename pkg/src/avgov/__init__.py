"""Approval-voting update selection: mechanism, equilibrium analysis and
the repeated game with delayed reputation-weight updates."""

from .core import (
    DUMMY,
    TOL,
    Instance,
    Outcome,
    RewardSchedule,
    VotingProfile,
    expected_reward,
    honest_profile,
    opt_quality,
    qual,
    reward,
    reward_curve,
    utility,
    winner,
)
from .errors import (
    AvgovError,
    ContractViolation,
    DerivationError,
    GuardRefusal,
    NormalizationError,
    ScenarioError,
)
from .params import (
    IDENTITY_TOL,
    SafetyEnvelope,
    ScheduleDiagnostics,
    derive_schedule,
    deviation_safety_threshold,
    external_bound_delta,
    max_discount,
    validate_schedule,
)
from .analysis import (
    ENUMERATION_GUARD_BITS,
    DynamicsTrace,
    EquilibriumEntry,
    EquilibriumQuery,
    EquilibriumReport,
    MoveRecord,
    SafetyCertificate,
    best_response,
    best_response_dynamics,
    constructive_pne,
    enumerate_equilibria,
    is_admissible,
    is_approx_pne,
    safety_certificate,
)
from .repeated import (
    DeviationGapResult,
    HonestPolicy,
    RepeatedTrace,
    SingleDeviatorPolicy,
    WorldConfig,
    correct_fraction,
    delayed_update,
    deviation_gap,
    deviation_tail_bound,
    discounted_total,
    sample_round,
)
from .repeated import run as run_repeated

__version__ = "0.1.0"
