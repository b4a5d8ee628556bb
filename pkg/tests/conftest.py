"""Shared helpers: seeded random corpora for parser and engine tests."""

from __future__ import annotations

import random
import string

from constarena.dsl import (
    ALWAYS,
    COMPARATORS,
    ActExpr,
    And,
    Constitution,
    MetricCompare,
    Not,
    Or,
    PredicateCall,
    Rule,
)

_IDENT_START = string.ascii_lowercase + "_"
_IDENT_BODY = string.ascii_lowercase + string.digits + "_"


def rand_ident(rng: random.Random, max_len: int = 10) -> str:
    # Lowercase only, so generated names can never collide with keywords.
    body = "".join(rng.choice(_IDENT_BODY) for _ in range(rng.randint(0, max_len - 1)))
    return rng.choice(_IDENT_START) + body


def rand_number(rng: random.Random) -> float:
    if rng.random() < 0.5:
        return float(rng.randint(-999, 999))
    # Bounded magnitude and <= 4 decimals keeps repr() in plain decimal
    # notation, which is all the tokenizer accepts.
    return round(rng.uniform(-99.0, 99.0), rng.randint(1, 4))


def rand_arg(rng: random.Random) -> float | str:
    return rand_number(rng) if rng.random() < 0.5 else rand_ident(rng)


def rand_cond(rng: random.Random, budget: int):
    """Random condition whose cond_depth is at most ``budget``."""
    if budget <= 1 or rng.random() < 0.45:
        kind = rng.random()
        if kind < 0.15:
            return ALWAYS
        if kind < 0.60:
            args = tuple(rand_arg(rng) for _ in range(rng.randint(0, 2)))
            return PredicateCall(rand_ident(rng), args)
        return MetricCompare(rand_ident(rng), rng.choice(COMPARATORS), rand_number(rng))
    roll = rng.random()
    if roll < 0.35:
        return Not(rand_cond(rng, budget - 1))
    operands = tuple(rand_cond(rng, budget - 1) for _ in range(rng.randint(2, 3)))
    return And(operands) if roll < 0.70 else Or(operands)


def rand_action(rng: random.Random) -> ActExpr:
    args = tuple(rand_arg(rng) for _ in range(rng.randint(0, 2)))
    return ActExpr(rand_ident(rng), args)


def random_constitution(rng: random.Random, max_rules: int = 32) -> Constitution:
    # Bias toward small rulebooks but keep the occasional 32-rule monster.
    n = 1 + min(rng.randrange(max_rules), rng.randrange(max_rules))
    priorities = sorted(rng.sample(range(1, 10 * max_rules), n))
    rules = tuple(
        Rule(p, rand_ident(rng), rand_cond(rng, rng.randint(1, 8)), rand_action(rng))
        for p in priorities)
    return Constitution(rand_ident(rng), rules)


def collect_atoms(expr) -> tuple[set[str], set[tuple[str, tuple]]]:
    """All metric names and (predicate, args) keys reachable in a condition."""
    metrics: set[str] = set()
    predicates: set[tuple[str, tuple]] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, MetricCompare):
            metrics.add(node.metric)
        elif isinstance(node, PredicateCall):
            predicates.add((node.name, node.args))
        elif isinstance(node, Not):
            stack.append(node.operand)
        elif isinstance(node, (And, Or)):
            stack.extend(node.operands)
    return metrics, predicates
