"""Deterministic mechanics of the approval-voting update-selection mechanism.

Domain types (one-shot game instances, reward schedules, voting profiles,
outcomes) plus the basic operations: winner selection, reward payout,
subjective expected utility, the honest strategy, estimated quality and the
expected-reward curve.

Conventions used throughout the package:

* experts are indexed 0..n-1;
* proposals are indexed 1..k, with 0 reserved for the dummy outcome that
  is selected when no proposal receives any approving weight.  The dummy
  implements nothing and pays nobody.

All values are immutable after construction and every operation is a pure
function of its inputs, so everything here is safe to share between
concurrent callers.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractViolation, NormalizationError

# Absolute tolerance for utility comparisons.  "Strictly better" always
# means exceeding by more than this amount.
TOL = 1e-9

DUMMY = 0


def _as_matrix(rows, name, n=None, k=None):
    out = tuple(tuple(float(x) for x in row) for row in rows)
    if n is not None and len(out) != n:
        raise ContractViolation(f"{name} must have {n} rows, got {len(out)}")
    widths = {len(row) for row in out}
    if len(widths) > 1:
        raise ContractViolation(f"{name} rows have unequal lengths {sorted(widths)}")
    if k is not None and out and len(out[0]) != k:
        raise ContractViolation(f"{name} must have {k} columns, got {len(out[0])}")
    return out


@dataclass(frozen=True)
class Instance:
    """A one-shot game: expert weights, belief matrix and external rewards.

    ``beliefs[i][j]`` is expert i's probability that proposal j+1 is good;
    ``external[i][j]`` is the side payment expert i collects if proposal
    j+1 is implemented (same monetary unit as the mechanism's rewards).
    """

    weights: tuple
    beliefs: tuple
    external: tuple = None

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        if not weights:
            raise ContractViolation("need at least one expert")
        beliefs = _as_matrix(self.beliefs, "beliefs", n=len(weights))
        if not beliefs[0]:
            raise ContractViolation("need at least one proposal")
        k = len(beliefs[0])
        if self.external is None:
            external = tuple((0.0,) * k for _ in weights)
        else:
            external = _as_matrix(self.external, "external", n=len(weights), k=k)
        for i, w in enumerate(weights):
            if not w >= 0.0:
                raise ContractViolation(f"weights[{i}] = {w} must be >= 0")
        for i, row in enumerate(beliefs):
            for j, p in enumerate(row):
                if not 0.0 <= p <= 1.0:
                    raise ContractViolation(f"beliefs[{i}][{j}] = {p} outside [0, 1]")
        for i, row in enumerate(external):
            for j, g in enumerate(row):
                if not g >= 0.0:
                    raise ContractViolation(f"external[{i}][{j}] = {g} must be >= 0")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "beliefs", beliefs)
        object.__setattr__(self, "external", external)

    @property
    def n(self):
        return len(self.weights)

    @property
    def k(self):
        return len(self.beliefs[0])


@dataclass(frozen=True)
class RewardSchedule:
    """Mechanism parameters.

    ``a`` pays an expert (times her weight) for approving a winner that
    turns out good, ``a_prime`` for disapproving a winner that turns out
    bad, ``s`` is the penalty for approving a bad winner, and a wrong
    disapproval pays nothing.  ``T`` is the belief at which approving and
    disapproving carry equal expected reward, ``epsilon`` the equilibrium
    slack the schedule was derived for and ``delta`` the bound on
    weight-normalized external rewards relative to ``a``.

    Construction only checks the basic ranges; conformance with the
    threshold and inflection identities is reported separately by
    :func:`avgov.params.validate_schedule`, so that non-conforming schedules can
    be diagnosed rather than rejected outright.
    """

    a: float
    a_prime: float
    s: float
    T: float
    epsilon: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        for name in ("a", "a_prime", "s", "T", "epsilon", "delta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.a > 0.0:
            raise ContractViolation(f"a = {self.a} must be > 0")
        if not self.a_prime >= 0.0:
            raise ContractViolation(f"a_prime = {self.a_prime} must be >= 0")
        if not self.s >= 0.0:
            raise ContractViolation(f"s = {self.s} must be >= 0")
        if not 0.0 < self.T < 1.0:
            raise ContractViolation(f"T = {self.T} must lie strictly inside (0, 1)")
        if not self.epsilon >= 0.0:
            raise ContractViolation(f"epsilon = {self.epsilon} must be >= 0")
        if not self.delta >= 0.0:
            raise ContractViolation(f"delta = {self.delta} must be >= 0")


@dataclass(frozen=True)
class VotingProfile:
    """An n-by-k binary vote matrix; ``votes[i][j]`` is expert i's vote on
    proposal j+1."""

    votes: tuple

    def __post_init__(self):
        votes = tuple(tuple(int(v) for v in row) for row in self.votes)
        if not votes or not votes[0]:
            raise ContractViolation("profile must be non-empty")
        width = len(votes[0])
        for i, row in enumerate(votes):
            if len(row) != width:
                raise ContractViolation("profile rows have unequal lengths")
            for j, v in enumerate(row):
                if v not in (0, 1):
                    raise ContractViolation(f"votes[{i}][{j}] = {v} is not a bit")
        object.__setattr__(self, "votes", votes)

    @property
    def n(self):
        return len(self.votes)

    @property
    def k(self):
        return len(self.votes[0])

    def replace_row(self, expert, row):
        """Return a copy with expert's vote vector replaced."""
        new = list(self.votes)
        new[expert] = tuple(int(v) for v in row)
        return VotingProfile(tuple(new))

    def flip(self, expert, proposal_j):
        """Return a copy with a single coordinate flipped (1-based proposal)."""
        row = list(self.votes[expert])
        row[proposal_j - 1] ^= 1
        return self.replace_row(expert, row)

    @staticmethod
    def zeros(n, k):
        return VotingProfile(tuple((0,) * k for _ in range(n)))


@dataclass(frozen=True)
class Outcome:
    """Result of winner selection: the winning proposal (0 = dummy), the
    per-proposal approving weight, and the winner's revealed quality bit
    once evaluation has happened (None before that)."""

    winner: int
    approval_mass: tuple
    revealed_quality: int | None = None


def _check_dims(instance, profile):
    if profile.n != instance.n or profile.k != instance.k:
        raise ContractViolation(
            f"profile is {profile.n}x{profile.k}, instance is {instance.n}x{instance.k}"
        )


def winner(instance: Instance, profile: VotingProfile) -> Outcome:
    """Select the proposal with the highest weighted approval.

    Ties are broken deterministically toward the smallest proposal index.
    Returns the dummy outcome 0 iff no proposal has positive approving
    weight.
    """
    _check_dims(instance, profile)
    masses = [0.0] * instance.k
    for i, row in enumerate(profile.votes):
        w = instance.weights[i]
        for j, v in enumerate(row):
            if v:
                masses[j] += w
    best = max(masses)
    if best <= 0.0:
        return Outcome(DUMMY, tuple(masses))
    return Outcome(masses.index(best) + 1, tuple(masses))


def reward(vote_bit: int, quality_bit: int, schedule: RewardSchedule, weight: float) -> float:
    """Realized payout for one expert given her vote on the winner and the
    winner's revealed quality, scaled by her weight."""
    if vote_bit not in (0, 1) or quality_bit not in (0, 1):
        raise ContractViolation("vote_bit and quality_bit must be bits")
    if not weight >= 0.0:
        raise ContractViolation(f"weight = {weight} must be >= 0")
    if vote_bit == 1:
        base = schedule.a if quality_bit == 1 else -schedule.s
    else:
        base = schedule.a_prime if quality_bit == 0 else 0.0
    return weight * base


def expected_reward(vote_bit: int, belief_p: float, schedule: RewardSchedule) -> float:
    """Weight-normalized expected mechanism reward for a vote on the
    winning proposal, from the voter's own perspective."""
    if vote_bit not in (0, 1):
        raise ContractViolation("vote_bit must be a bit")
    if not 0.0 <= belief_p <= 1.0:
        raise ContractViolation(f"belief_p = {belief_p} outside [0, 1]")
    if vote_bit == 1:
        return belief_p * schedule.a - (1.0 - belief_p) * schedule.s
    return (1.0 - belief_p) * schedule.a_prime


def _normalized_external(instance, expert_i, proposal_j):
    g = instance.external[expert_i][proposal_j - 1]
    if g == 0.0:
        return 0.0
    w = instance.weights[expert_i]
    if w <= 0.0:
        raise NormalizationError(
            f"expert {expert_i} has zero weight but external[{expert_i}]"
            f"[{proposal_j - 1}] = {g} > 0"
        )
    return g / w


def utility(instance: Instance, schedule: RewardSchedule, profile: VotingProfile,
            expert_i: int) -> float:
    """Expected utility of one expert under the profile, conditioned on her
    own beliefs.

    Uses the weight-normalized accounting: the weight multiplier is dropped
    from the mechanism reward and external rewards are divided by the
    expert's weight instead.  A dummy winner yields utility 0.
    """
    _check_dims(instance, profile)
    if not 0 <= expert_i < instance.n:
        raise ContractViolation(f"expert index {expert_i} out of range")
    outcome = winner(instance, profile)
    if outcome.winner == DUMMY:
        return 0.0
    j = outcome.winner
    p = instance.beliefs[expert_i][j - 1]
    ghat = _normalized_external(instance, expert_i, j)
    return p * ghat + expected_reward(profile.votes[expert_i][j - 1], p, schedule)


def honest_profile(instance: Instance, T: float) -> VotingProfile:
    """The honest strategy profile: approve exactly the proposals whose
    belief is at or above the threshold."""
    if not 0.0 < T < 1.0:
        raise ContractViolation(f"T = {T} must lie strictly inside (0, 1)")
    return VotingProfile(
        tuple(tuple(1 if p >= T else 0 for p in row) for row in instance.beliefs)
    )


def qual(instance: Instance, T: float, proposal_j: int) -> float:
    """Estimated quality of a proposal: total weight of experts whose
    belief in it is at or above the threshold.  The dummy has quality 0."""
    if proposal_j == DUMMY:
        return 0.0
    if not 1 <= proposal_j <= instance.k:
        raise ContractViolation(f"proposal index {proposal_j} out of range")
    return sum(
        w for w, row in zip(instance.weights, instance.beliefs)
        if row[proposal_j - 1] >= T
    )


def opt_quality(instance: Instance, T: float) -> tuple:
    """The proposal of maximal estimated quality and that quality, ties
    broken toward the smallest index."""
    values = [qual(instance, T, j) for j in range(1, instance.k + 1)]
    best = max(values)
    return values.index(best) + 1, best


def reward_curve(schedule: RewardSchedule, sample_count: int) -> list:
    """Tabulate both expected-reward branches on an even belief grid.

    Returns ``sample_count`` rows ``(p, approve_value, reject_value)`` for
    p evenly spaced over [0, 1]; the two branches cross at p = T.
    """
    if sample_count < 2:
        raise ContractViolation("sample_count must be at least 2")
    rows = []
    for i in range(sample_count):
        p = i / (sample_count - 1)
        rows.append((p, expected_reward(1, p, schedule), expected_reward(0, p, schedule)))
    return rows
