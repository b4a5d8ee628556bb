"""Quality-diversity search: one mutate-evaluate-archive generation at a time.

The archive is a small MAP-Elites grid over (rule-count bucket, aggression
rate); each cell keeps the best-fitness candidate seen for that behavior.
A step seeds a fresh archive with the incumbent constitution, asks the
mutation operator for a population of children, evaluates the survivors of
the parse/validate gate over K fixed seeds, and returns the step's best.

Candidates that fail to parse or validate are counted and dropped; they can
never reach the archive, and therefore never reach a checkpoint.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Protocol

from . import envs
from .dsl import (
    ActExpr,
    Constitution,
    MAX_RULES,
    MetricCompare,
    ParseError,
    PredicateCall,
    Registry,
    Rule,
    parse,
    serialize,
    validate,
)
from .envs import EnvSpec, Faction
from .scoring import CANONICAL_WEIGHTS, ScoreBreakdown, ScoreWeights, fitness

REJECT_NO_BLOCK = "no_block"
REJECT_PARSE = "parse"
REJECT_VALIDATE = "validate"
REJECT_NETWORK = "network"


class SearchError(Exception):
    pass


@dataclass(frozen=True)
class EvolveConfig:
    population_per_generation: int = 6
    islands: int = 1
    elite_ratio: float = 0.4
    exploit_ratio: float = 0.4
    explore_ratio: float = 0.2
    k: int = 2
    seed_base: int = 42
    seed_stride: int = 17

    def __post_init__(self):
        if self.islands != 1:
            raise SearchError("only a single island is supported")
        total = self.elite_ratio + self.exploit_ratio + self.explore_ratio
        if abs(total - 1.0) > 1e-9:
            raise SearchError(f"selection ratios sum to {total}, expected 1.0")
        if self.k < 1 or self.population_per_generation < 1:
            raise SearchError("k and population_per_generation must be >= 1")

    def evaluation_seeds(self, k: int | None = None) -> tuple[int, ...]:
        count = self.k if k is None else k
        return tuple(self.seed_base + self.seed_stride * i for i in range(count))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    faction: Faction
    mode: str
    seeds: tuple[int, ...]
    own: tuple[ScoreBreakdown, ...]  # one per seed
    opp: tuple[ScoreBreakdown, ...]
    mean_own: float
    mean_opp: float
    fitness: float
    aggression_rate: float


def _episode_stats(args: tuple) -> tuple:
    """Top-level so process pools can pickle it."""
    spec, blue, red, seed, faction = args
    traj = envs.run(spec, blue, red, seed)
    return (envs.metrics(traj, faction), envs.metrics(traj, faction.other),
            traj.aggression_count(faction), traj.agent_turns(faction))


MapFn = Callable[[Callable, Iterable], Iterable]


def evaluate(candidate: Constitution, opponent: Constitution, env_spec: EnvSpec,
             k: int, mode: str, faction: Faction,
             weights: ScoreWeights = CANONICAL_WEIGHTS,
             seed_base: int = 42, seed_stride: int = 17,
             map_fn: MapFn = map) -> EvalResult:
    """Averages stability scores over K episodes at seeds base + stride*i.

    The candidate occupies the given faction slot; the opponent takes the
    other. map_fn may be an executor's map; results are consumed in seed
    order either way, so parallel evaluation cannot change the outcome.
    """
    seeds = tuple(seed_base + seed_stride * i for i in range(k))
    if faction is Faction.BLUE:
        jobs = [(env_spec, candidate, opponent, s, faction) for s in seeds]
    else:
        jobs = [(env_spec, opponent, candidate, s, faction) for s in seeds]
    own: list[ScoreBreakdown] = []
    opp: list[ScoreBreakdown] = []
    aggressive = 0
    agent_turns = 0
    for own_parts, opp_parts, attempts, turns in map_fn(_episode_stats, jobs):
        own.append(ScoreBreakdown.from_components(*own_parts, weights=weights))
        opp.append(ScoreBreakdown.from_components(*opp_parts, weights=weights))
        aggressive += attempts
        agent_turns += turns
    mean_own = sum(b.score for b in own) / k
    mean_opp = sum(b.score for b in opp) / k
    return EvalResult(
        faction=faction, mode=mode, seeds=seeds, own=tuple(own), opp=tuple(opp),
        mean_own=mean_own, mean_opp=mean_opp,
        fitness=fitness(mean_own, mean_opp, mode, faction),
        aggression_rate=min(1.0, aggressive / agent_turns) if agent_turns else 0.0,
    )


# ---------------------------------------------------------------------------
# Archive
# ---------------------------------------------------------------------------

RULE_BUCKETS = ((1, 4), (5, 8), (9, 16), (17, 32))
AGGRESSION_BINS = 5


def descriptor(constitution: Constitution, aggression_rate: float) -> tuple[int, int]:
    """(rule-count bucket, aggression bin); the archive's behavior coordinates."""
    count = len(constitution.rules)
    for bucket, (lo, hi) in enumerate(RULE_BUCKETS):
        if lo <= count <= hi:
            rule_bucket = bucket
            break
    else:
        raise SearchError(f"rule count {count} outside bucket range")
    aggression_bin = min(int(aggression_rate * AGGRESSION_BINS), AGGRESSION_BINS - 1)
    return rule_bucket, aggression_bin


@dataclass(frozen=True)
class CandidateRecord:
    constitution: Constitution
    text: str
    index: int  # 0 = incumbent seed, 1.. = children in proposal order
    fitness: float
    result: EvalResult
    flagged: bool = False  # step fell back to its parent (every child rejected)

    @property
    def cell(self) -> tuple[int, int]:
        return descriptor(self.constitution, self.result.aggression_rate)


@dataclass
class Archive:
    cells: dict[tuple[int, int], CandidateRecord] = field(default_factory=dict)

    def add(self, record: CandidateRecord) -> bool:
        """Keeps the cell's max-fitness record; first-comer wins exact ties."""
        cell = record.cell
        incumbent = self.cells.get(cell)
        if incumbent is None or record.fitness > incumbent.fitness:
            self.cells[cell] = record
            return True
        return False

    def __len__(self) -> int:
        return len(self.cells)

    def ranked(self) -> list[tuple[tuple[int, int], CandidateRecord]]:
        return sorted(self.cells.items(), key=lambda kv: (-kv[1].fitness, kv[0]))

    def to_snapshot(self) -> dict:
        return {
            "cells": [
                {"cell": list(cell), "fitness": rec.fitness, "index": rec.index,
                 "mean_own": rec.result.mean_own, "mean_opp": rec.result.mean_opp,
                 "aggression_rate": rec.result.aggression_rate,
                 "constitution": rec.text}
                for cell, rec in self.ranked()
            ]
        }


def select_parent(archive: Archive, rng: random.Random,
                  cfg: EvolveConfig) -> CandidateRecord:
    """Mixture selection: elite (top cells), exploit (fitness-weighted), explore."""
    if not archive.cells:
        raise SearchError("cannot select from an empty archive")
    ranked = archive.ranked()
    records = [rec for _, rec in ranked]
    u = rng.random()
    if u < cfg.elite_ratio:
        top = records[:math.ceil(cfg.elite_ratio * len(records))]
        return rng.choice(top)
    if u < cfg.elite_ratio + cfg.exploit_ratio:
        floor = min(rec.fitness for rec in records)
        weights = [rec.fitness - floor for rec in records]
        if sum(weights) <= 0:
            return rng.choice(records)
        return rng.choices(records, weights=weights, k=1)[0]
    return rng.choice(records)


# ---------------------------------------------------------------------------
# Mutation operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MutationProposal:
    text: str | None = None
    failure: str | None = None  # REJECT_NO_BLOCK or REJECT_NETWORK

    def __post_init__(self):
        if (self.text is None) == (self.failure is None):
            raise SearchError("proposal carries exactly one of text/failure")


class Mutator(Protocol):
    def propose(self, parent: Constitution, rng: random.Random) -> MutationProposal: ...


class IdentityMutator:
    """Returns the parent unchanged; handy for loop tests."""

    def propose(self, parent: Constitution, rng: random.Random) -> MutationProposal:
        return MutationProposal(text=serialize(parent))


def _numeric_slots(c: Constitution, registry: Registry) -> list[tuple]:
    """(rule_idx, site, arg_idx, domain) for every perturbable number."""
    slots = []
    for ri, rule in enumerate(c.rules):

        def walk(expr):
            if isinstance(expr, MetricCompare):
                domain = registry.metrics[expr.metric].domain
                slots.append((ri, "metric", id(expr), domain, expr))
            elif isinstance(expr, PredicateCall):
                sig = registry.predicates[expr.name]
                for ai, (spec, value) in enumerate(zip(sig.params, expr.args)):
                    if spec.kind in ("fraction", "amount", "count"):
                        slots.append((ri, "pred_arg", ai, spec.kind, expr))
            elif hasattr(expr, "operands"):
                for op in expr.operands:
                    walk(op)
            elif hasattr(expr, "operand"):
                walk(expr.operand)

        walk(rule.condition)
        sig = registry.actions[rule.action.name]
        for ai, (spec, value) in enumerate(zip(sig.params, rule.action.args)):
            if spec.kind in ("fraction", "amount", "count"):
                slots.append((ri, "act_arg", ai, spec.kind, rule.action))
    return slots


def _choice_slots(c: Constitution, registry: Registry) -> list[tuple]:
    slots = []
    for ri, rule in enumerate(c.rules):

        def walk(expr):
            if isinstance(expr, PredicateCall):
                sig = registry.predicates[expr.name]
                for ai, spec in enumerate(sig.params):
                    if spec.kind == "choice" and len(spec.choices) > 1:
                        slots.append((ri, "pred_arg", ai, spec, expr))
            elif hasattr(expr, "operands"):
                for op in expr.operands:
                    walk(op)
            elif hasattr(expr, "operand"):
                walk(expr.operand)

        walk(rule.condition)
        sig = registry.actions[rule.action.name]
        for ai, spec in enumerate(sig.params):
            if spec.kind == "choice" and len(spec.choices) > 1:
                slots.append((ri, "act_arg", ai, spec, rule.action))
    return slots


def _perturbed(value: float, domain: str, rng: random.Random) -> float:
    factor = 1.0 + rng.choice((-1.0, 1.0)) * rng.uniform(0.05, 0.25)
    out = value * factor
    if domain == "fraction":
        return min(1.0, max(0.0, out))
    if domain == "count":
        return float(max(1, round(out)))
    if domain == "amount":
        return max(out, 0.01)
    return max(out, 0.0)  # bare metric threshold


def _replace_expr(expr, old, new):
    if expr is old:
        return new
    if hasattr(expr, "operands"):
        return type(expr)(tuple(_replace_expr(op, old, new) for op in expr.operands))
    if hasattr(expr, "operand"):
        return type(expr)(_replace_expr(expr.operand, old, new))
    return expr


def _with_rule(c: Constitution, idx: int, rule: Rule) -> Constitution:
    rules = list(c.rules)
    rules[idx] = rule
    rules.sort(key=lambda r: r.priority)
    return Constitution(c.name, tuple(rules))


def _parse_template(body: str, priority: int, name: str) -> Rule:
    text = f"CONSTITUTION t\nRULE {priority} {name}: {body}\n"
    return parse(text).rules[0]


def scripted_mutate(c: Constitution, rng: random.Random,
                    registry: Registry) -> Constitution:
    """One random edit, chosen uniformly among the edits applicable to c.

    Edits: perturb a numeric argument by 5-25%, swap two adjacent priorities,
    delete a rule, insert a registry template rule, or switch a choice-typed
    argument. Output always parses and validates against the registry.
    """
    numeric = _numeric_slots(c, registry)
    choices = _choice_slots(c, registry)
    applicable = []
    if numeric:
        applicable.append("perturb")
    if len(c.rules) > 1:
        applicable.append("swap")
        applicable.append("delete")
    if len(c.rules) < MAX_RULES and registry.rule_templates:
        applicable.append("insert")
    if choices:
        applicable.append("choice")
    edit = rng.choice(applicable)

    if edit == "perturb":
        ri, site, arg_idx, domain, node = rng.choice(numeric)
        rule = c.rules[ri]
        if site == "metric":
            new_node = MetricCompare(node.metric, node.op,
                                     _perturbed(node.value, domain, rng))
            return _with_rule(c, ri, replace(
                rule, condition=_replace_expr(rule.condition, node, new_node)))
        new_args = list(node.args)
        new_args[arg_idx] = _perturbed(float(new_args[arg_idx]), domain, rng)
        if site == "act_arg":
            return _with_rule(c, ri, replace(rule, action=ActExpr(node.name,
                                                                  tuple(new_args))))
        new_node = PredicateCall(node.name, tuple(new_args))
        return _with_rule(c, ri, replace(
            rule, condition=_replace_expr(rule.condition, node, new_node)))

    if edit == "swap":
        i = rng.randrange(len(c.rules) - 1)
        a, b = c.rules[i], c.rules[i + 1]
        rules = list(c.rules)
        rules[i] = replace(a, priority=b.priority)
        rules[i + 1] = replace(b, priority=a.priority)
        rules.sort(key=lambda r: r.priority)
        return Constitution(c.name, tuple(rules))

    if edit == "delete":
        i = rng.randrange(len(c.rules))
        rules = c.rules[:i] + c.rules[i + 1:]
        return Constitution(c.name, rules)

    if edit == "insert":
        body = rng.choice(registry.rule_templates)
        priority = max(r.priority for r in c.rules) + 1
        rule = _parse_template(body, priority, f"added_{priority}")
        return Constitution(c.name, c.rules + (rule,))

    ri, site, arg_idx, spec, node = rng.choice(choices)
    rule = c.rules[ri]
    current = node.args[arg_idx]
    options = [o for o in spec.choices if o != current]
    new_args = list(node.args)
    new_args[arg_idx] = rng.choice(options)
    if site == "act_arg":
        return _with_rule(c, ri, replace(rule, action=ActExpr(node.name,
                                                              tuple(new_args))))
    new_node = PredicateCall(node.name, tuple(new_args))
    return _with_rule(c, ri, replace(
        rule, condition=_replace_expr(rule.condition, node, new_node)))


class ScriptedMutator:
    """Offline mutation operator; always yields a valid constitution."""

    def __init__(self, registry: Registry):
        self.registry = registry

    def propose(self, parent: Constitution, rng: random.Random) -> MutationProposal:
        return MutationProposal(text=serialize(scripted_mutate(parent, rng,
                                                               self.registry)))


# ---------------------------------------------------------------------------
# One generation
# ---------------------------------------------------------------------------

@dataclass
class StepResult:
    best: CandidateRecord
    archive: Archive
    rejections: Counter
    candidates_evaluated: int

    @property
    def all_children_rejected(self) -> bool:
        return self.candidates_evaluated == 0


def openevolve_step(seed_const: Constitution, opponent: Constitution,
                    cfg: EvolveConfig, mutator: Mutator, env_spec: EnvSpec,
                    mode: str, faction: Faction, rng: random.Random,
                    weights: ScoreWeights = CANONICAL_WEIGHTS,
                    map_fn: MapFn = map) -> StepResult:
    """Mutate, gate, evaluate, archive; returns the step's best candidate.

    The incumbent is evaluated first (index 0) and is always present in the
    fresh archive, so a step can never do worse than returning it. Rejected
    children are tallied by cause and never evaluated or archived.
    """
    registry = envs.registry_for(env_spec)
    report = validate(seed_const, registry)
    if not report.ok:
        raise SearchError(f"incumbent constitution invalid: {report.summary()}")

    def run_eval(candidate: Constitution) -> EvalResult:
        return evaluate(candidate, opponent, env_spec, cfg.k, mode, faction,
                        weights=weights, seed_base=cfg.seed_base,
                        seed_stride=cfg.seed_stride, map_fn=map_fn)

    archive = Archive()
    incumbent_result = run_eval(seed_const)
    incumbent = CandidateRecord(seed_const, serialize(seed_const), 0,
                                incumbent_result.fitness, incumbent_result)
    archive.add(incumbent)
    best = incumbent
    rejections: Counter = Counter()
    evaluated = 0

    for index in range(1, cfg.population_per_generation + 1):
        parent = select_parent(archive, rng, cfg)
        proposal = mutator.propose(parent.constitution, rng)
        if proposal.failure is not None:
            rejections[proposal.failure] += 1
            continue
        try:
            candidate = parse(proposal.text)
        except ParseError:
            rejections[REJECT_PARSE] += 1
            continue
        if not validate(candidate, registry).ok:
            rejections[REJECT_VALIDATE] += 1
            continue
        result = run_eval(candidate)
        record = CandidateRecord(candidate, serialize(candidate), index,
                                 result.fitness, result)
        archive.add(record)
        evaluated += 1
        if record.fitness > best.fitness:
            best = record

    if evaluated == 0:
        best = replace(incumbent, flagged=True)
    return StepResult(best, archive, rejections, evaluated)
