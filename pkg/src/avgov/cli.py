"""Command-line interface: scenario files, command dispatch and built-in
reproductions of the named instances.

Output is deterministic: JSON with sorted keys and reals canonicalized to
12 significant digits; optional CSV via --out.  Exit codes: 0 ok, 1 a
reproduction claim failed, 2 validation, 3 guard refusal, 64 usage.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass

from . import analysis, core, params, repeated
from .errors import (
    ContractViolation,
    DerivationError,
    GuardRefusal,
    NormalizationError,
    ScenarioError,
)

COMMANDS = (
    "derive-params", "validate", "winner", "qual", "honest", "enumerate",
    "poa", "construct-pne", "dynamics", "safety", "reward-curve", "repeat",
    "deviation-gap", "reproduce",
)

# Which library operation each command exposes; every public operation is
# reachable from exactly one command (checked by the test suite).
DISPATCH_OPS = {
    "derive-params": ("params.derive_schedule",),
    "validate": ("params.validate_schedule",),
    "winner": ("core.winner", "core.utility"),
    "qual": ("core.qual",),
    "honest": ("core.honest_profile",),
    "enumerate": ("analysis.enumerate_equilibria", "analysis.is_approx_pne",
                  "analysis.is_admissible"),
    "poa": ("core.opt_quality",),
    "construct-pne": ("analysis.constructive_pne",),
    "dynamics": ("analysis.best_response_dynamics", "analysis.best_response"),
    "safety": ("params.deviation_safety_threshold", "params.external_bound_delta",
               "analysis.safety_certificate"),
    "reward-curve": ("core.reward_curve", "core.expected_reward"),
    "repeat": ("repeated.run", "repeated.sample_round", "repeated.delayed_update",
               "repeated.correct_fraction", "core.reward"),
    "deviation-gap": ("repeated.deviation_gap", "params.max_discount"),
    "reproduce": (),
}


# ---------------------------------------------------------------------------
# Canonical output
# ---------------------------------------------------------------------------


def _canonical(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        if math.isnan(obj):
            raise ValueError("NaN has no canonical form")
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return float(format(obj, ".12g"))
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit(payload, stream=None):
    print(json.dumps(_canonical(payload), sort_keys=True, indent=2),
          file=stream or sys.stdout)


def _cell(value):
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".12g")
    if value is None:
        return ""
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _flatten(payload, prefix=""):
    rows = []
    for key in sorted(payload):
        value = payload[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(_flatten(value, prefix=name + "."))
        elif isinstance(value, (list, tuple)):
            rows.append((name, json.dumps(_canonical(value))))
        else:
            rows.append((name, _cell(value) if not isinstance(value, str) else value))
    return rows


def profile_to_str(profile):
    return "|".join("".join(str(v) for v in row) for row in profile.votes)


def parse_profile(text):
    rows = text.replace(",", "|").split("|")
    try:
        return core.VotingProfile(tuple(tuple(int(c) for c in row) for row in rows))
    except (ValueError, ContractViolation) as exc:
        raise ScenarioError(f"bad profile {text!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    instance: core.Instance
    schedule: core.RewardSchedule
    query: analysis.EquilibriumQuery
    world: repeated.WorldConfig | None
    diagnostics: params.ScheduleDiagnostics
    schedule_form: str  # "explicit" | "derived"


EXPLICIT_KEYS = {"a", "a_prime", "s", "T"}
DERIVABLE_KEYS = {"T", "epsilon", "a_prime"}


def _schedule_from_dict(data):
    supplied_delta = None
    if "delta" in data:
        data = dict(data)
        supplied_delta = float(data.pop("delta"))
    keys = set(data)
    if keys == DERIVABLE_KEYS:
        try:
            schedule = params.derive_schedule(
                float(data["T"]), float(data["epsilon"]), float(data["a_prime"]),
                delta=supplied_delta or 0.0,
            )
        except DerivationError as exc:
            raise ScenarioError(f"schedule: {exc}") from exc
        return schedule, "derived", supplied_delta
    if keys == EXPLICIT_KEYS:
        a, ap, T = float(data["a"]), float(data["a_prime"]), float(data["T"])
        # Recover the slack the schedule was built for; downstream bounds
        # need it and the explicit form does not carry it.
        epsilon = max(a / (ap * (1.0 - T)) - 1.0, 0.0) if ap > 0.0 and T < 1.0 else 0.0
        try:
            schedule = core.RewardSchedule(
                a=a, a_prime=ap, s=float(data["s"]), T=T, epsilon=epsilon,
                delta=supplied_delta or 0.0,
            )
        except ContractViolation as exc:
            raise ScenarioError(f"schedule: {exc}") from exc
        diag = params.validate_schedule(schedule)
        if diag.threshold_identity_residual > params.IDENTITY_TOL:
            raise ScenarioError(
                "schedule: threshold identity T = (a'+s)/(a'+s+a) fails, residual "
                f"{diag.threshold_identity_residual}"
            )
        if diag.inflection_residual > params.IDENTITY_TOL:
            raise ScenarioError(
                "schedule: inflection identity T*a - (1-T)*s = a'*(1-T) fails, "
                f"residual {diag.inflection_residual}"
            )
        return schedule, "explicit", supplied_delta
    if EXPLICIT_KEYS < keys or (keys > DERIVABLE_KEYS):
        raise ScenarioError(
            "schedule: give exactly one of the explicit form {a, a_prime, s, T} "
            "or the derivable form {T, epsilon, a_prime}, not a mixture"
        )
    raise ScenarioError(
        f"schedule: unrecognized key set {sorted(keys)}; expected "
        "{a, a_prime, s, T} or {T, epsilon, a_prime}"
    )


def scenario_from_dict(data) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    try:
        experts = data["experts"]
        weights = tuple(e["weight"] for e in experts)
        beliefs = tuple(tuple(e["beliefs"]) for e in experts)
        external = tuple(
            tuple(e.get("external", [0.0] * len(e["beliefs"]))) for e in experts
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"experts: missing or malformed field ({exc})") from exc
    try:
        instance = core.Instance(weights=weights, beliefs=beliefs, external=external)
    except ContractViolation as exc:
        raise ScenarioError(str(exc)) from exc
    if "schedule" not in data:
        raise ScenarioError("scenario has no schedule")
    schedule, form, supplied_delta = _schedule_from_dict(data["schedule"])
    # The external-reward bound belongs to the instance; a supplied value
    # may only widen it.
    computed_delta = params.external_bound_delta(instance, schedule)
    if supplied_delta is not None and supplied_delta < computed_delta - 1e-12:
        raise ScenarioError(
            f"schedule: delta = {supplied_delta} is below the bound "
            f"{computed_delta} computed from the instance's external rewards"
        )
    if computed_delta > schedule.delta:
        schedule = dataclasses.replace(schedule, delta=computed_delta)
    query_data = data.get("query", {})
    try:
        query = analysis.EquilibriumQuery(
            mode=query_data.get("mode", "semi"),
            epsilon=float(query_data.get("epsilon", 0.0)),
        )
    except ContractViolation as exc:
        raise ScenarioError(f"query: {exc}") from exc
    world = None
    if "world" in data:
        wd = data["world"]
        try:
            world = repeated.WorldConfig(
                expertise=tuple(wd["expertise"]),
                good_prior=float(wd["good_prior"]),
                proposals_per_round=int(wd["k"]),
                zeta=float(wd["zeta"]),
                gamma=float(wd["gamma"]),
                horizon=int(wd["horizon"]),
                seed=int(wd.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"world: missing or malformed field ({exc})") from exc
        except ContractViolation as exc:
            raise ScenarioError(f"world: {exc}") from exc
    return Scenario(
        instance=instance, schedule=schedule, query=query, world=world,
        diagnostics=params.validate_schedule(schedule), schedule_form=form,
    )


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error in {path}: {exc}") from exc
    return scenario_from_dict(data)


def scenario_to_dict(scenario: Scenario) -> dict:
    sched = scenario.schedule
    if scenario.schedule_form == "derived":
        schedule = {"T": sched.T, "epsilon": sched.epsilon, "a_prime": sched.a_prime}
    else:
        schedule = {"a": sched.a, "a_prime": sched.a_prime, "s": sched.s, "T": sched.T}
    if sched.delta > 0.0:
        schedule["delta"] = sched.delta
    data = {
        "experts": [
            {
                "weight": scenario.instance.weights[i],
                "beliefs": list(scenario.instance.beliefs[i]),
                "external": list(scenario.instance.external[i]),
            }
            for i in range(scenario.instance.n)
        ],
        "schedule": schedule,
        "query": {"mode": scenario.query.mode, "epsilon": scenario.query.epsilon},
    }
    if scenario.world is not None:
        w = scenario.world
        data["world"] = {
            "expertise": list(w.expertise), "good_prior": w.good_prior,
            "k": w.proposals_per_round, "zeta": w.zeta, "gamma": w.gamma,
            "horizon": w.horizon, "seed": w.seed,
        }
    return data


# ---------------------------------------------------------------------------
# Built-in instances
# ---------------------------------------------------------------------------

BUILTIN_T = 0.9
BUILTIN_EPSILON = 19.0


def _builtin_schedule():
    return params.derive_schedule(BUILTIN_T, BUILTIN_EPSILON, 1.0)


def _scenario(instance, world=None, mode="semi", epsilon=0.0):
    schedule = _builtin_schedule()
    return Scenario(
        instance=instance, schedule=schedule,
        query=analysis.EquilibriumQuery(mode=mode, epsilon=epsilon),
        world=world, diagnostics=params.validate_schedule(schedule),
        schedule_form="derived",
    )


def prop4_scenario() -> Scenario:
    """Three experts, two proposals, no equilibrium for semi-strategic
    experts: the best-response walk cycles."""
    instance = core.Instance(
        weights=(0.49, 0.41, 0.10),
        beliefs=((0.95, 1.0), (1.0, 0.95), (1.0, 0.0)),
    )
    return _scenario(instance)


def thm6_scenario(weight_slack: float = 0.1) -> Scenario:
    """Two experts whose weights differ by a small slack; the unique-ish
    semi-strategic equilibrium elects the lower-quality proposal, pushing
    the anarchy ratio toward 2 as the slack shrinks."""
    if not 0.0 < weight_slack < 1.0:
        raise ContractViolation(f"weight_slack = {weight_slack} outside (0, 1)")
    instance = core.Instance(
        weights=(1.0 + weight_slack, 1.0 - weight_slack),
        beliefs=((BUILTIN_T, 1.0), (1.0, 0.0)),
    )
    return _scenario(instance)


def prop3_scenario(n: int = 4) -> Scenario:
    """n+1 experts, two proposals: the constructive equilibrium elects a
    proposal whose quality is a 1/n fraction of the optimum."""
    if n < 1:
        raise ContractViolation(f"n = {n} must be >= 1")
    weights = (1.0 / n + 0.01,) + (1.0 / n,) * n
    beliefs = ((1.0, 0.0),) + ((0.0, 1.0),) * n
    return _scenario(core.Instance(weights=weights, beliefs=beliefs),
                     mode="strategic")


BUILTINS = ("prop3", "prop4", "thm6")


# ---------------------------------------------------------------------------
# Command handlers.  Each returns (payload, csv_header, csv_rows); header
# and rows are None for commands without a natural table.
# ---------------------------------------------------------------------------


def _need_scenario(args):
    if getattr(args, "scenario", None) is None:
        raise ScenarioError(f"{args.command} requires --scenario FILE")
    return load_scenario(args.scenario)


def _query_override(scenario, args):
    mode = getattr(args, "mode", None) or scenario.query.mode
    epsilon = getattr(args, "epsilon", None)
    if epsilon is None:
        epsilon = scenario.query.epsilon
    return analysis.EquilibriumQuery(mode=mode, epsilon=epsilon)


def _schedule_dict(schedule):
    return {
        "a": schedule.a, "a_prime": schedule.a_prime, "s": schedule.s,
        "T": schedule.T, "epsilon": schedule.epsilon, "delta": schedule.delta,
    }


def _diagnostics_dict(diag):
    return {
        "threshold_identity_residual": diag.threshold_identity_residual,
        "inflection_residual": diag.inflection_residual,
        "a_dominates": diag.a_dominates,
        "epsilon_condition": diag.epsilon_condition,
        "all_ok": diag.all_ok,
    }


def cmd_derive_params(args):
    if args.T is None or args.epsilon is None or args.a_prime is None:
        scenario = _need_scenario(args)
        if scenario.schedule_form != "derived":
            raise ScenarioError(
                "derive-params needs --T/--epsilon/--a-prime or a scenario "
                "with a derivable schedule"
            )
        schedule = scenario.schedule
    else:
        schedule = params.derive_schedule(args.T, args.epsilon, args.a_prime)
    payload = {
        "schedule": _schedule_dict(schedule),
        "diagnostics": _diagnostics_dict(params.validate_schedule(schedule)),
    }
    return payload, None, None


def cmd_validate(args):
    scenario = _need_scenario(args)
    payload = {
        "schedule": _schedule_dict(scenario.schedule),
        "diagnostics": _diagnostics_dict(scenario.diagnostics),
        "schedule_form": scenario.schedule_form,
    }
    return payload, None, None


def _resolve_profile(scenario, text):
    if text in (None, "honest"):
        return core.honest_profile(scenario.instance, scenario.schedule.T)
    if text == "zeros":
        return core.VotingProfile.zeros(scenario.instance.n, scenario.instance.k)
    profile = parse_profile(text)
    if profile.n != scenario.instance.n or profile.k != scenario.instance.k:
        raise ScenarioError(
            f"profile is {profile.n}x{profile.k}, instance is "
            f"{scenario.instance.n}x{scenario.instance.k}"
        )
    return profile


def cmd_winner(args):
    scenario = _need_scenario(args)
    profile = _resolve_profile(scenario, args.profile)
    outcome = core.winner(scenario.instance, profile)
    utilities = [
        core.utility(scenario.instance, scenario.schedule, profile, i)
        for i in range(scenario.instance.n)
    ]
    payload = {
        "profile": profile_to_str(profile),
        "winner": outcome.winner,
        "approval_mass": list(outcome.approval_mass),
        "utilities": utilities,
    }
    return payload, None, None


def cmd_qual(args):
    scenario = _need_scenario(args)
    instance, T = scenario.instance, scenario.schedule.T
    values = [core.qual(instance, T, j) for j in range(1, instance.k + 1)]
    opt = core.opt_quality(instance, T)
    payload = {
        "qualities": values,
        "opt": {"proposal": opt[0], "quality": opt[1]},
        "threshold": T,
    }
    return payload, None, None


def cmd_honest(args):
    scenario = _need_scenario(args)
    profile = core.honest_profile(scenario.instance, scenario.schedule.T)
    return {"profile": profile_to_str(profile)}, None, None


def _report_payload(report):
    return {
        "mode": report.query.mode,
        "epsilon": report.query.epsilon,
        "equilibrium_count": len(report.equilibria),
        "equilibria": [
            {
                "profile": profile_to_str(e.profile),
                "winner": e.winner,
                "winner_quality": e.winner_quality,
            }
            for e in report.equilibria
        ],
        "opt": {"proposal": report.opt[0], "quality": report.opt[1]},
        "poa": report.poa,
        "pos": report.pos,
    }


def cmd_enumerate(args):
    scenario = _need_scenario(args)
    query = _query_override(scenario, args)
    report = analysis.enumerate_equilibria(scenario.instance, scenario.schedule, query)
    rows = [
        (profile_to_str(e.profile), e.winner, e.winner_quality)
        for e in report.equilibria
    ]
    return _report_payload(report), ("profile", "winner", "winner_quality"), rows


def cmd_poa(args):
    scenario = _need_scenario(args)
    query = _query_override(scenario, args)
    report = analysis.enumerate_equilibria(scenario.instance, scenario.schedule, query)
    payload = {
        "mode": query.mode,
        "epsilon": query.epsilon,
        "equilibrium_count": len(report.equilibria),
        "opt": {"proposal": report.opt[0], "quality": report.opt[1]},
        "poa": report.poa,
        "pos": report.pos,
    }
    return payload, None, None


def cmd_construct_pne(args):
    scenario = _need_scenario(args)
    profile = analysis.constructive_pne(scenario.instance, scenario.schedule)
    outcome = core.winner(scenario.instance, profile)
    verified = analysis.is_approx_pne(
        scenario.instance, scenario.schedule, profile,
        analysis.EquilibriumQuery(mode="strategic", epsilon=0.0),
    )
    payload = {
        "profile": profile_to_str(profile),
        "winner": outcome.winner,
        "winner_quality": core.qual(scenario.instance, scenario.schedule.T,
                                    outcome.winner),
        "is_strategic_pne": verified,
    }
    return payload, None, None


def cmd_dynamics(args):
    scenario = _need_scenario(args)
    start = _resolve_profile(scenario, args.start)
    mode = args.mode or scenario.query.mode
    trace = analysis.best_response_dynamics(
        scenario.instance, scenario.schedule, start, mode, args.max_steps
    )
    moves = [
        {
            "expert": m.expert,
            "old": "".join(str(v) for v in m.old_votes),
            "new": "".join(str(v) for v in m.new_votes),
            "winner": m.winner,
        }
        for m in trace.path
    ]
    payload = {
        "start": profile_to_str(start),
        "mode": mode,
        "moves": moves,
        "steps": len(trace.path),
        "terminal": trace.terminal,
        "cycle_length": trace.cycle_length,
    }
    rows = [
        (idx, m.expert, "".join(str(v) for v in m.old_votes),
         "".join(str(v) for v in m.new_votes), m.winner)
        for idx, m in enumerate(trace.path)
    ]
    return payload, ("step", "expert", "old_votes", "new_votes", "winner"), rows


def cmd_safety(args):
    scenario = _need_scenario(args)
    envelope = params.deviation_safety_threshold(scenario.schedule, args.g)
    certificate = analysis.safety_certificate(scenario.instance, scenario.schedule)
    delta = params.external_bound_delta(scenario.instance, scenario.schedule)
    payload = {
        "envelope": {
            "g": args.g,
            "statement_branch": envelope.statement_branch,
            "proof_branch": envelope.proof_branch,
            "effective_threshold": envelope.effective_threshold,
            "variant": envelope.variant,
        },
        "delta": delta,
        "certificate": {
            "safe": [list(row) for row in certificate.safe],
            "eligible": certificate.eligible,
        },
    }
    return payload, None, None


def cmd_reward_curve(args):
    scenario = _need_scenario(args)
    rows = core.reward_curve(scenario.schedule, args.samples)
    gaps = [abs(yes - no) for _, yes, no in rows]
    payload = {
        "samples": args.samples,
        "threshold": scenario.schedule.T,
        "min_gap_p": rows[gaps.index(min(gaps))][0],
    }
    return payload, ("p", "approve_value", "reject_value"), rows


def _world_for(args, scenario):
    world = scenario.world
    if world is None:
        raise ScenarioError(f"{args.command} requires a scenario with a world section")
    horizon = getattr(args, "horizon", None)
    seed = getattr(args, "seed", None)
    if horizon is not None or seed is not None:
        world = repeated.WorldConfig(
            expertise=world.expertise, good_prior=world.good_prior,
            proposals_per_round=world.proposals_per_round, zeta=world.zeta,
            gamma=world.gamma,
            horizon=horizon if horizon is not None else world.horizon,
            seed=seed if seed is not None else world.seed,
        )
    return world


def cmd_repeat(args):
    scenario = _need_scenario(args)
    world = _world_for(args, scenario)
    trace = repeated.run(world, scenario.schedule)
    payload = {
        "horizon": world.horizon,
        "gamma": world.gamma,
        "zeta": world.zeta,
        "seed": world.seed,
        "non_dummy_rounds": trace.revealed_rounds,
        "final_weights": list(trace.weights[-1]),
        "correct": list(trace.correct),
        "discounted_realized": list(trace.discounted_realized),
        "discounted_subjective": list(trace.discounted_subjective),
        "gamma_warning": trace.gamma_warning,
    }
    rows = []
    for t in range(world.horizon):
        for i in range(world.n):
            rows.append((
                t, i, "".join(str(v) for v in trace.profiles[t].votes[i]),
                trace.winners[t], trace.revealed[t],
                trace.realized[t][i], trace.subjective[t][i],
                trace.weights[t][i], trace.weights[t + 1][i],
            ))
    header = ("round", "expert", "votes", "winner", "revealed_quality",
              "realized_reward", "subjective_reward", "weight", "weight_next")
    return payload, header, rows


def cmd_deviation_gap(args):
    scenario = _need_scenario(args)
    world = _world_for(args, scenario)
    horizon = args.horizon if args.horizon is not None else world.horizon
    result = repeated.deviation_gap(world, scenario.schedule, args.expert, horizon)
    sched = scenario.schedule
    tail = repeated.deviation_tail_bound(sched, world.zeta, world.gamma, horizon)
    ratio_with_tail = (
        (result.best_total + tail) / result.honest_total
        if result.honest_total > 0.0 else float("inf")
    )
    payload = {
        "expert": args.expert,
        "horizon": horizon,
        "gamma": world.gamma,
        "max_discount": params.max_discount(sched.epsilon, world.zeta),
        "plan_count": result.plan_count,
        "honest_total": result.honest_total,
        "best_total": result.best_total,
        "ratio": result.ratio,
        "tail_bound": tail,
        "ratio_with_tail": ratio_with_tail,
        "deviation_bound": (1.0 + 3.0 * sched.epsilon) * (1.0 + sched.delta),
        "single_shot_bound": (1.0 + sched.epsilon) * (1.0 + sched.delta),
        "best_plan": ["".join(str(v) for v in row) for row in result.best_plan],
    }
    return payload, None, None


def _approx_equal(x, y, tol=1e-9):
    return abs(x - y) <= tol


def cmd_reproduce(args):
    name = args.name
    if name == "prop4":
        scenario = prop4_scenario()
        mode = args.mode or "semi"
        epsilon = args.epsilon if args.epsilon is not None else 0.0
        report = analysis.enumerate_equilibria(
            scenario.instance, scenario.schedule,
            analysis.EquilibriumQuery(mode=mode, epsilon=epsilon),
        )
        start = core.honest_profile(scenario.instance, scenario.schedule.T)
        trace = analysis.best_response_dynamics(
            scenario.instance, scenario.schedule, start, mode, max_steps=64
        )
        claims = {
            "no_pne": len(report.equilibria) == 0,
            "cycle_of_length_4": trace.terminal == "cycle" and trace.cycle_length == 4,
        }
        payload = {
            "name": name,
            "mode": mode,
            "epsilon": epsilon,
            "equilibria": [profile_to_str(e.profile) for e in report.equilibria],
            "cycle_length": trace.cycle_length,
            "moves": [
                {"expert": m.expert,
                 "new": "".join(str(v) for v in m.new_votes),
                 "winner": m.winner}
                for m in trace.path
            ],
            "claims": claims,
            "pass": all(claims.values()),
        }
        return payload, None, None
    if name == "thm6":
        slack = args.eps_weight
        scenario = thm6_scenario(slack)
        profile = core.VotingProfile(((0, 1), (1, 0)))
        is_pne = analysis.is_approx_pne(
            scenario.instance, scenario.schedule, profile,
            analysis.EquilibriumQuery(mode="semi", epsilon=0.0),
        )
        outcome = core.winner(scenario.instance, profile)
        quality = core.qual(scenario.instance, scenario.schedule.T, outcome.winner)
        opt = core.opt_quality(scenario.instance, scenario.schedule.T)
        ratio = opt[1] / quality if quality > 0.0 else float("inf")
        claims = {
            "profile_is_semi_pne": is_pne,
            "ratio_matches": _approx_equal(ratio, 2.0 / (1.0 + slack)),
        }
        payload = {
            "name": name,
            "weight_slack": slack,
            "profile": profile_to_str(profile),
            "pne_quality": quality,
            "opt": opt[1],
            "poa": ratio,
            "claims": claims,
            "pass": all(claims.values()),
        }
        return payload, None, None
    if name == "prop3":
        n = args.n
        scenario = prop3_scenario(n)
        profile = analysis.constructive_pne(scenario.instance, scenario.schedule)
        expected = [[0, 0] for _ in range(scenario.instance.n)]
        expected[0][0] = 1
        is_pne = analysis.is_approx_pne(
            scenario.instance, scenario.schedule, profile,
            analysis.EquilibriumQuery(mode="strategic", epsilon=0.0),
        )
        outcome = core.winner(scenario.instance, profile)
        quality = core.qual(scenario.instance, scenario.schedule.T, outcome.winner)
        opt = core.opt_quality(scenario.instance, scenario.schedule.T)
        ratio = opt[1] / quality if quality > 0.0 else float("inf")
        claims = {
            "constructive_is_first_expert_first_proposal":
                profile.votes == tuple(tuple(r) for r in expected),
            "passes_strategic_check": is_pne,
            "ratio_matches": _approx_equal(ratio, 1.0 / (1.0 / n + 0.01)),
        }
        payload = {
            "name": name,
            "n": n,
            "profile": profile_to_str(profile),
            "pne_quality": quality,
            "opt": opt[1],
            "ratio": ratio,
            "claims": claims,
            "pass": all(claims.values()),
        }
        return payload, None, None
    raise ScenarioError(f"unknown builtin {name!r}; choose from {BUILTINS}")


HANDLERS = {
    "derive-params": cmd_derive_params,
    "validate": cmd_validate,
    "winner": cmd_winner,
    "qual": cmd_qual,
    "honest": cmd_honest,
    "enumerate": cmd_enumerate,
    "poa": cmd_poa,
    "construct-pne": cmd_construct_pne,
    "dynamics": cmd_dynamics,
    "safety": cmd_safety,
    "reward-curve": cmd_reward_curve,
    "repeat": cmd_repeat,
    "deviation-gap": cmd_deviation_gap,
    "reproduce": cmd_reproduce,
}


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="avgov",
        description="Approval-voting update selection: mechanism and analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--out", help="write CSV/flattened output here")
        p.add_argument("--seed", type=int, help="override world seed")
        return p

    p = add("derive-params", help="derive a reward schedule from (T, epsilon, a')")
    p.add_argument("--T", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--a-prime", dest="a_prime", type=float)

    add("validate", help="schedule identity diagnostics")

    p = add("winner", help="winner and per-expert utilities for a profile")
    p.add_argument("--profile", help="votes like 11|10|10 (default: honest)")

    add("qual", help="per-proposal estimated quality and the optimum")
    add("honest", help="the honest voting profile")

    for name in ("enumerate", "poa"):
        p = add(name, help="exhaustive equilibrium search"
                if name == "enumerate" else "price of anarchy / stability")
        p.add_argument("--mode", choices=analysis.MODES)
        p.add_argument("--epsilon", type=float)

    add("construct-pne", help="constructive equilibrium for strategic experts")

    p = add("dynamics", help="best-response dynamics with cycle detection")
    p.add_argument("--start", default="honest",
                   help="honest, zeros, or an explicit profile")
    p.add_argument("--mode", choices=analysis.MODES)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=64)

    p = add("safety", help="deviation-safety thresholds and certificate")
    p.add_argument("--g", type=float, default=0.0,
                   help="normalized external reward for the envelope")

    p = add("reward-curve", help="expected-reward branches over the belief grid")
    p.add_argument("--samples", type=int, default=101)

    p = add("repeat", help="simulate the repeated game")
    p.add_argument("--horizon", type=int)

    p = add("deviation-gap", help="exhaustive single-deviator search")
    p.add_argument("--expert", type=int, default=0)
    p.add_argument("--horizon", type=int)

    p = add("reproduce", help="reproduce a built-in instance and check its claims")
    p.add_argument("name", choices=BUILTINS)
    p.add_argument("--mode", choices=analysis.MODES)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eps-weight", dest="eps_weight", type=float, default=0.1)
    p.add_argument("--n", type=int, default=4)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 64
    handler = HANDLERS[args.command]
    try:
        payload, header, rows = handler(args)
    except (ContractViolation, NormalizationError, DerivationError,
            ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GuardRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    emit(payload)
    if args.out:
        if rows is not None:
            _write_csv(args.out, header, rows)
        else:
            _write_csv(args.out, ("key", "value"), _flatten(payload))
    if payload.get("pass") is False:
        failed = [k for k, v in payload.get("claims", {}).items() if not v]
        print(f"claim check failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
