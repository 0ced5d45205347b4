"""Core mechanics: winner selection, rewards, utilities, honest strategy,
estimated quality and the reward curve."""

import itertools

import pytest
from hypothesis import given, strategies as st

from avgov import (
    ContractViolation,
    Instance,
    NormalizationError,
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
from avgov.cli import prop3_scenario, prop4_scenario, thm6_scenario

SCHED = RewardSchedule(a=2.0, a_prime=1.0, s=17.0, T=0.9, epsilon=19.0)


@pytest.fixture
def prop4():
    sc = prop4_scenario()
    return sc.instance, sc.schedule


@pytest.fixture
def thm6():
    sc = thm6_scenario(0.1)
    return sc.instance, sc.schedule


# ---------------------------------------------------------------------------
# Type invariants
# ---------------------------------------------------------------------------


def test_instance_validation():
    with pytest.raises(ContractViolation):
        Instance(weights=(), beliefs=())
    with pytest.raises(ContractViolation, match=r"beliefs\[0\]\[1\]"):
        Instance(weights=(1.0,), beliefs=((0.5, 1.2),))
    with pytest.raises(ContractViolation, match=r"weights\[0\]"):
        Instance(weights=(-0.1,), beliefs=((0.5,),))
    with pytest.raises(ContractViolation, match=r"external\[0\]\[0\]"):
        Instance(weights=(1.0,), beliefs=((0.5,),), external=((-1.0,),))
    with pytest.raises(ContractViolation):
        Instance(weights=(1.0, 1.0), beliefs=((0.5,),))


def test_schedule_validation():
    with pytest.raises(ContractViolation):
        RewardSchedule(a=0.0, a_prime=1.0, s=1.0, T=0.5)
    with pytest.raises(ContractViolation):
        RewardSchedule(a=1.0, a_prime=1.0, s=1.0, T=1.0)
    with pytest.raises(ContractViolation):
        RewardSchedule(a=1.0, a_prime=-1.0, s=1.0, T=0.5)


def test_profile_validation():
    with pytest.raises(ContractViolation):
        VotingProfile(((0, 2),))
    with pytest.raises(ContractViolation):
        VotingProfile(((0, 1), (0,)))
    profile = VotingProfile(((0, 1), (1, 0)))
    assert profile.replace_row(0, (1, 1)).votes == ((1, 1), (1, 0))
    assert profile.flip(1, 2).votes == ((0, 1), (1, 1))


# ---------------------------------------------------------------------------
# winner
# ---------------------------------------------------------------------------


def test_winner_prop4_honest(prop4):
    instance, schedule = prop4
    profile = VotingProfile(((1, 1), (1, 1), (1, 0)))
    outcome = winner(instance, profile)
    assert outcome.winner == 1
    assert outcome.approval_mass[0] == pytest.approx(1.00)
    assert outcome.approval_mass[1] == pytest.approx(0.90)


def test_winner_all_zero_is_dummy(prop4):
    instance, _ = prop4
    outcome = winner(instance, VotingProfile.zeros(3, 2))
    assert outcome.winner == 0
    assert outcome.approval_mass == (0.0, 0.0)


def test_winner_thm6(thm6):
    instance, _ = thm6
    outcome = winner(instance, VotingProfile(((0, 1), (1, 0))))
    assert outcome.winner == 2
    assert outcome.approval_mass == pytest.approx((0.9, 1.1))


def test_winner_tie_breaks_to_smallest_index():
    instance = Instance(weights=(1.0, 1.0), beliefs=((1.0, 0.0), (0.0, 1.0)))
    outcome = winner(instance, VotingProfile(((1, 0), (0, 1))))
    assert outcome.winner == 1


def test_winner_dimension_mismatch(prop4):
    instance, _ = prop4
    with pytest.raises(ContractViolation):
        winner(instance, VotingProfile(((1, 1), (1, 1))))


@given(st.integers(0, 2 ** 6 - 1), st.sampled_from([2.0, 0.5, 10.0, 3.7]))
def test_winner_scale_invariance(bits, c):
    instance = prop4_scenario().instance
    scaled = Instance(
        weights=tuple(c * w for w in instance.weights),
        beliefs=instance.beliefs,
    )
    votes = tuple(
        tuple((bits >> (i * 2 + j)) & 1 for j in range(2)) for i in range(3)
    )
    profile = VotingProfile(votes)
    assert winner(instance, profile).winner == winner(scaled, profile).winner


# ---------------------------------------------------------------------------
# reward
# ---------------------------------------------------------------------------


def test_reward_examples():
    assert reward(1, 1, SCHED, 0.5) == pytest.approx(1.0)
    assert reward(0, 1, SCHED, 123.0) == 0.0
    assert reward(1, 0, SCHED, 1.0) == pytest.approx(-17.0)
    assert reward(0, 0, SCHED, 2.0) == pytest.approx(2.0)


def test_reward_table_all_cases():
    sched = RewardSchedule(a=3.0, a_prime=0.75, s=12.0, T=0.8)
    for w in (0.0, 0.25, 1.0, 4.0):
        table = {
            (1, 1): w * sched.a,
            (1, 0): -w * sched.s,
            (0, 0): w * sched.a_prime,
            (0, 1): 0.0,
        }
        for (v, q), expect in table.items():
            assert reward(v, q, sched, w) == pytest.approx(expect)


def test_reward_rejects_non_bits():
    with pytest.raises(ContractViolation):
        reward(2, 0, SCHED, 1.0)
    with pytest.raises(ContractViolation):
        reward(1, 1, SCHED, -1.0)


# ---------------------------------------------------------------------------
# expected_reward
# ---------------------------------------------------------------------------


def test_expected_reward_examples():
    assert expected_reward(1, 0.95, SCHED) == pytest.approx(1.05)
    assert expected_reward(1, 0.9, SCHED) == pytest.approx(0.1)
    assert expected_reward(0, 0.9, SCHED) == pytest.approx(0.1)
    assert expected_reward(0, 1.0, SCHED) == 0.0


def test_expected_reward_crossing_at_threshold():
    # Any schedule satisfying the inflection identity has the two branches
    # meet at p = T.
    from avgov import derive_schedule

    for T, eps in ((0.9, 19.0), (2.0 / 3.0, 3.0), (0.75, 4.0)):
        sched = derive_schedule(T, eps, 1.0)
        gap = expected_reward(1, T, sched) - expected_reward(0, T, sched)
        assert abs(gap) <= 1e-9


def test_expected_reward_monotone_branches():
    grid = [i / 40 for i in range(41)]
    yes = [expected_reward(1, p, SCHED) for p in grid]
    no = [expected_reward(0, p, SCHED) for p in grid]
    assert all(b > a for a, b in zip(yes, yes[1:]))
    assert all(b < a for a, b in zip(no, no[1:]))


def test_expected_reward_no_branch_flat_when_a_prime_zero():
    sched = RewardSchedule(a=1.0, a_prime=0.0, s=1.0, T=0.5)
    assert expected_reward(0, 0.2, sched) == expected_reward(0, 0.8, sched) == 0.0


# ---------------------------------------------------------------------------
# utility
# ---------------------------------------------------------------------------


def test_utility_prop4_examples(prop4):
    instance, schedule = prop4
    honest = VotingProfile(((1, 1), (1, 1), (1, 0)))
    assert utility(instance, schedule, honest, 0) == pytest.approx(1.05)
    assert utility(instance, schedule, honest, 2) == pytest.approx(2.0)


def test_utility_dummy_winner_is_zero(prop4):
    instance, schedule = prop4
    assert utility(instance, schedule, VotingProfile.zeros(3, 2), 1) == 0.0


def test_utility_normalizes_external_by_weight():
    instance = Instance(weights=(0.5,), beliefs=((1.0,),), external=((0.2,),))
    profile = VotingProfile(((1,),))
    # normalized external: 0.2 / 0.5 = 0.4, plus a for the certain approval
    assert utility(instance, SCHED, profile, 0) == pytest.approx(SCHED.a + 0.4)


def test_utility_zero_weight_with_external_errors():
    instance = Instance(weights=(0.0, 1.0), beliefs=((1.0,), (1.0,)),
                        external=((0.2,), (0.0,)))
    profile = VotingProfile(((1,), (1,)))
    with pytest.raises(NormalizationError):
        utility(instance, SCHED, profile, 0)


def test_utility_expert_index_out_of_range(prop4):
    instance, schedule = prop4
    with pytest.raises(ContractViolation):
        utility(instance, schedule, VotingProfile.zeros(3, 2), 3)


def test_honest_bit_optimal_when_not_pivotal():
    # A heavy expert fixes the winner; the light expert's vote on it never
    # changes the outcome, so her honest bit must maximize utility.
    for p in [i / 20 for i in range(21)]:
        instance = Instance(weights=(5.0, 1.0), beliefs=((1.0,), (p,)))
        approve = VotingProfile(((1,), (1,)))
        reject = VotingProfile(((1,), (0,)))
        u_yes = utility(instance, SCHED, approve, 1)
        u_no = utility(instance, SCHED, reject, 1)
        honest_u = u_yes if p >= SCHED.T else u_no
        assert honest_u >= max(u_yes, u_no) - 1e-12


# ---------------------------------------------------------------------------
# honest_profile / qual / opt_quality
# ---------------------------------------------------------------------------


def test_honest_profile_prop4(prop4):
    instance, schedule = prop4
    assert honest_profile(instance, schedule.T).votes == ((1, 1), (1, 1), (1, 0))


def test_honest_profile_all_low_beliefs():
    instance = Instance(weights=(1.0, 1.0), beliefs=((0.0, 0.0), (0.0, 0.0)))
    assert honest_profile(instance, 0.9).votes == ((0, 0), (0, 0))


def test_honest_profile_thm6_boundary(thm6):
    # p = T counts as an approval.
    instance, schedule = thm6
    assert honest_profile(instance, schedule.T).votes == ((1, 1), (1, 0))


def test_qual_prop4(prop4):
    instance, schedule = prop4
    assert qual(instance, schedule.T, 1) == pytest.approx(1.00)
    assert qual(instance, schedule.T, 2) == pytest.approx(0.90)
    assert qual(instance, schedule.T, 0) == 0.0


def test_qual_prop3_n4():
    sc = prop3_scenario(4)
    assert sc.instance.weights[0] == pytest.approx(0.26)
    assert qual(sc.instance, sc.schedule.T, 2) == pytest.approx(1.0)


def test_qual_rejects_bad_index(prop4):
    instance, schedule = prop4
    with pytest.raises(ContractViolation):
        qual(instance, schedule.T, 3)


def test_qual_additive_over_singletons(prop4):
    instance, schedule = prop4
    for j in (1, 2):
        parts = sum(
            qual(
                Instance(weights=(instance.weights[i],),
                         beliefs=(instance.beliefs[i],)),
                schedule.T, j,
            )
            for i in range(instance.n)
        )
        assert parts == pytest.approx(qual(instance, schedule.T, j))


def test_opt_quality(prop4, thm6):
    instance, schedule = prop4
    assert opt_quality(instance, schedule.T) == (1, pytest.approx(1.00))
    instance6, schedule6 = thm6
    assert opt_quality(instance6, schedule6.T) == (1, pytest.approx(2.0))
    single = Instance(weights=(0.7,), beliefs=((0.95,),))
    assert opt_quality(single, 0.9) == (1, pytest.approx(0.7))


def test_opt_quality_tie_breaks_to_smallest_index():
    instance = Instance(weights=(1.0,), beliefs=((1.0, 1.0),))
    assert opt_quality(instance, 0.5)[0] == 1


# ---------------------------------------------------------------------------
# reward_curve
# ---------------------------------------------------------------------------


def test_reward_curve_endpoints_and_crossing():
    rows = reward_curve(SCHED, 101)
    assert len(rows) == 101
    p0, yes0, no0 = rows[0]
    assert (p0, yes0, no0) == (0.0, pytest.approx(-SCHED.s), pytest.approx(SCHED.a_prime))
    p1, yes1, no1 = rows[-1]
    assert (p1, yes1, no1) == (1.0, pytest.approx(SCHED.a), 0.0)
    row_T = rows[90]
    assert row_T[0] == pytest.approx(0.9)
    assert row_T[1] == pytest.approx(0.1)
    assert row_T[2] == pytest.approx(0.1)


def test_reward_curve_crosses_within_grid_resolution():
    for samples in (11, 37, 101):
        rows = reward_curve(SCHED, samples)
        sign_changes = [
            i for i in range(len(rows) - 1)
            if (rows[i][1] - rows[i][2]) * (rows[i + 1][1] - rows[i + 1][2]) <= 0
        ]
        assert sign_changes
        assert any(
            rows[i][0] - 1e-12 <= SCHED.T <= rows[i + 1][0] + 1e-12
            for i in sign_changes
        )


def test_reward_curve_needs_two_samples():
    with pytest.raises(ContractViolation):
        reward_curve(SCHED, 1)
