"""Rule engine: evaluates a constitution against one observation.

Rules are tried in ascending priority order; the first rule whose condition
holds supplies the action. Boolean operators short-circuit, so the decision
trace records only the atoms actually evaluated. If no rule fires the engine
falls back to ``rest``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Protocol

from .dsl import (
    ActExpr,
    Always,
    And,
    CondExpr,
    Constitution,
    MetricCompare,
    Not,
    Or,
    PredicateCall,
)

FALLBACK_ACTION = ActExpr("rest", ())
FALLBACK_RULE = "fallback"


class EngineError(Exception):
    """An observation could not answer a metric/predicate the rules need."""


class Observation(Protocol):
    def metric(self, name: str) -> float: ...

    def predicate(self, name: str, args: tuple[float | str, ...]) -> bool: ...


@dataclass(frozen=True)
class AtomRecord:
    """One evaluated leaf: which atom, in which rule, and what it returned."""

    rule: str
    atom: str
    value: bool


@dataclass
class ActionDecision:
    action: ActExpr
    rule: str  # name of the firing rule, or "fallback"
    trace: list[AtomRecord] = field(default_factory=list)


_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
}


def _atom_label(expr: CondExpr) -> str:
    if isinstance(expr, Always):
        return "ALWAYS"
    if isinstance(expr, MetricCompare):
        return f"{expr.metric} {expr.op} {expr.value}"
    assert isinstance(expr, PredicateCall)
    if expr.args:
        return f"{expr.name}({', '.join(str(a) for a in expr.args)})"
    return expr.name


def _eval_cond(expr: CondExpr, obs: Observation, rule: str,
               trace: list[AtomRecord]) -> bool:
    if isinstance(expr, Always):
        trace.append(AtomRecord(rule, "ALWAYS", True))
        return True
    if isinstance(expr, Not):
        return not _eval_cond(expr.operand, obs, rule, trace)
    if isinstance(expr, And):
        for op in expr.operands:
            if not _eval_cond(op, obs, rule, trace):
                return False
        return True
    if isinstance(expr, Or):
        for op in expr.operands:
            if _eval_cond(op, obs, rule, trace):
                return True
        return False
    if isinstance(expr, MetricCompare):
        try:
            observed = obs.metric(expr.metric)
        except KeyError as exc:
            raise EngineError(f"observation lacks metric {expr.metric!r}") from exc
        value = _CMP[expr.op](observed, expr.value)
        trace.append(AtomRecord(rule, _atom_label(expr), value))
        return value
    assert isinstance(expr, PredicateCall)
    try:
        value = bool(obs.predicate(expr.name, expr.args))
    except KeyError as exc:
        raise EngineError(f"observation lacks predicate {expr.name!r}") from exc
    trace.append(AtomRecord(rule, _atom_label(expr), value))
    return value


def decide(constitution: Constitution, obs: Observation,
           rng: random.Random | None = None) -> ActionDecision:
    """Returns the first matching rule's action, with the evaluation trace.

    The rng parameter is accepted for call-site symmetry with stochastic
    policies; rule evaluation itself is deterministic (randomness lives in
    action resolution inside the environments).
    """
    del rng
    trace: list[AtomRecord] = []
    for rule in constitution.rules:
        if _eval_cond(rule.condition, obs, rule.name, trace):
            return ActionDecision(rule.action, rule.name, trace)
    return ActionDecision(FALLBACK_ACTION, FALLBACK_RULE, trace)


@dataclass(frozen=True)
class MappingObservation:
    """Observation backed by plain dicts, used in tests and trace tooling."""

    metrics: dict[str, float]
    predicates: dict[tuple[str, tuple[float | str, ...]], bool]

    def metric(self, name: str) -> float:
        return self.metrics[name]

    def predicate(self, name: str, args: tuple[float | str, ...]) -> bool:
        return self.predicates[(name, args)]
