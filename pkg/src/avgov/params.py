"""Reward-schedule derivation and validation, deviation-safety thresholds,
the external-reward bound and the maximal discount factor for the repeated
game.

All functions are pure and safe for unrestricted concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Instance, RewardSchedule
from .errors import ContractViolation, DerivationError, NormalizationError

# Residual tolerance for the schedule identities.
IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class ScheduleDiagnostics:
    """Residuals of the two schedule identities plus the derivation-side
    conditions; ``all_ok`` iff both residuals are within tolerance and both
    flags hold."""

    threshold_identity_residual: float
    inflection_residual: float
    a_dominates: bool
    epsilon_condition: bool
    all_ok: bool


@dataclass(frozen=True)
class SafetyEnvelope:
    """Belief thresholds below which no profitable vote-in-favour deviation
    exists, for a given external reward.

    Two variants of the bound's second numerator are in circulation and
    disagree in general: ``statement_branch`` uses a'(1-T) + a, while
    ``proof_branch`` re-derives it as a'(1-T) + s, which coincides with
    T(a+s) whenever the inflection identity holds.  Both are reported;
    ``effective_threshold`` follows the configured variant, the re-derived
    one by default.
    """

    statement_branch: float
    proof_branch: float
    effective_threshold: float
    variant: str = "proof"


def derive_schedule(T: float, epsilon: float, a_prime: float, *,
                    delta: float = 0.0,
                    require_a_dominance: bool = True) -> RewardSchedule:
    """Derive (a, s) from (T, epsilon, a_prime).

    Requires 1/(epsilon+1) < T < 1 and a_prime > 0.  The derived reward
    satisfies a >= a_prime iff (1+epsilon)(1-T) >= 1; set
    ``require_a_dominance=False`` to accept schedules without that
    property (diagnostics will flag them).
    """
    if T in (0.0, 1.0):
        raise DerivationError(f"T = {T} is degenerate; the threshold must be interior")
    if not 0.0 < T < 1.0:
        raise DerivationError(f"T = {T} outside (0, 1)")
    if not epsilon >= 0.0:
        raise DerivationError(f"epsilon = {epsilon} must be >= 0")
    if not a_prime > 0.0:
        raise DerivationError(f"a_prime = {a_prime} must be > 0")
    if not 1.0 / (epsilon + 1.0) < T:
        raise DerivationError(
            f"condition 1/(epsilon+1) < T violated: 1/{epsilon + 1} = "
            f"{1.0 / (epsilon + 1.0)} >= {T}"
        )
    a = (1.0 + epsilon) * a_prime * (1.0 - T)
    if require_a_dominance and a < a_prime:
        raise DerivationError(
            f"condition a >= a_prime violated: (1+epsilon)(1-T) = "
            f"{(1.0 + epsilon) * (1.0 - T)} < 1; pass require_a_dominance=False "
            "to derive anyway"
        )
    s = a * (T * (epsilon + 1.0) - 1.0) / ((1.0 - T) * (epsilon + 1.0))
    return RewardSchedule(a=a, a_prime=a_prime, s=s, T=T, epsilon=epsilon, delta=delta)


def validate_schedule(schedule: RewardSchedule) -> ScheduleDiagnostics:
    """Report how far a schedule is from the defining identities.

    Never raises: returns diagnostics so non-conforming schedules can be
    inspected.
    """
    a, ap, s, T = schedule.a, schedule.a_prime, schedule.s, schedule.T
    threshold_residual = abs(T - (ap + s) / (ap + s + a))
    inflection_residual = abs(T * a - (1.0 - T) * s - ap * (1.0 - T))
    a_dominates = a >= ap
    epsilon_condition = 1.0 / (schedule.epsilon + 1.0) < T
    all_ok = (
        threshold_residual <= IDENTITY_TOL
        and inflection_residual <= IDENTITY_TOL
        and a_dominates
        and epsilon_condition
    )
    return ScheduleDiagnostics(
        threshold_identity_residual=threshold_residual,
        inflection_residual=inflection_residual,
        a_dominates=a_dominates,
        epsilon_condition=epsilon_condition,
        all_ok=all_ok,
    )


def deviation_safety_threshold(schedule: RewardSchedule, g: float, *,
                               variant: str = "proof") -> SafetyEnvelope:
    """Belief level below which voting a proposal up can never pay off,
    given the (weight-normalized) external reward g attached to it.

    With g = 0 and a schedule satisfying the inflection identity the
    effective threshold equals T, recovering the dominant-strategy
    guarantee for unbribed experts.
    """
    if not g >= 0.0:
        raise ContractViolation(f"g = {g} must be >= 0")
    if variant not in ("proof", "statement"):
        raise ContractViolation(f"unknown variant {variant!r}")
    a, ap, s, T = schedule.a, schedule.a_prime, schedule.s, schedule.T
    denom = a + s + g
    first = T * (a + s) / denom
    statement = (ap * (1.0 - T) + a) / denom
    proof_second = (ap * (1.0 - T) + s) / denom
    proof = min(first, proof_second)
    if variant == "proof":
        effective = proof
    else:
        effective = min(first, statement)
    clamp = lambda x: min(max(x, 0.0), 1.0)
    return SafetyEnvelope(
        statement_branch=clamp(statement),
        proof_branch=clamp(proof),
        effective_threshold=clamp(effective),
        variant=variant,
    )


def external_bound_delta(instance: Instance, schedule: RewardSchedule) -> float:
    """The tightest delta such that every weight-normalized external reward
    satisfies g/w <= a * delta.  Zero when the instance has no external
    rewards."""
    worst = 0.0
    for i in range(instance.n):
        w = instance.weights[i]
        for j in range(instance.k):
            g = instance.external[i][j]
            if g == 0.0:
                continue
            if w <= 0.0:
                raise NormalizationError(
                    f"expert {i} has zero weight but external[{i}][{j}] = {g} > 0"
                )
            worst = max(worst, (g / w) / schedule.a)
    return worst


def max_discount(epsilon: float, zeta: float) -> float:
    """Largest discount factor for which the repeated-game reward ratio
    (1-(1-zeta)g)/(1-(1+zeta)g) stays within 1+epsilon.

    The condition holds with equality at the returned value (for
    epsilon > 0).  At zeta = 0 the bound degenerates to the open supremum
    1, which is returned as-is; admissible discounts are strictly below 1
    in that case.
    """
    if not epsilon >= 0.0:
        raise ContractViolation(f"epsilon = {epsilon} must be >= 0")
    if not 0.0 <= zeta < 1.0:
        raise ContractViolation(f"zeta = {zeta} outside [0, 1)")
    denom = (1.0 + epsilon) * (1.0 + zeta) - (1.0 - zeta)
    if denom <= 0.0:
        return 0.0
    return min(max(epsilon / denom, 0.0), 1.0)
