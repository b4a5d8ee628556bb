"""Parser, serializer, and validator behavior."""

from __future__ import annotations

import random

import pytest

from constarena.dsl import (
    ALWAYS,
    MAX_COND_DEPTH,
    MAX_RULES,
    And,
    Constitution,
    MetricCompare,
    Not,
    Or,
    ParseError,
    PredicateCall,
    Rule,
    cond_depth,
    parse,
    serialize,
    validate,
)
from constarena.registries import GRID_REGISTRY, PGG_REGISTRY

from .conftest import random_constitution

SIMPLE = """\
CONSTITUTION demo
# trailing comment lines are ignored
RULE 2 fallback_rule: WHEN ALWAYS DO rest
RULE 1 cautious: WHEN group_avg_contrib < 0.3 AND NOT was_punished_last_round DO contribute(0.2)
"""


def test_parse_simple_and_priority_sort():
    c = parse(SIMPLE)
    assert c.name == "demo"
    assert [r.priority for r in c.rules] == [1, 2]
    assert c.rules[0].name == "cautious"
    cond = c.rules[0].condition
    assert isinstance(cond, And)
    assert cond.operands[0] == MetricCompare("group_avg_contrib", "<", 0.3)
    assert cond.operands[1] == Not(PredicateCall("was_punished_last_round"))
    assert c.rules[0].action.name == "contribute"
    assert c.rules[0].action.args == (0.2,)
    assert c.rules[1].condition == ALWAYS


def test_operator_precedence_or_lowest():
    c = parse("CONSTITUTION p\n"
              "RULE 1 r: WHEN a OR b AND NOT c DO rest\n")
    cond = c.rules[0].condition
    assert isinstance(cond, Or)
    assert cond.operands[0] == PredicateCall("a")
    rhs = cond.operands[1]
    assert isinstance(rhs, And)
    assert rhs.operands == (PredicateCall("b"), Not(PredicateCall("c")))


def test_parentheses_override_precedence():
    c = parse("CONSTITUTION p\nRULE 1 r: WHEN (a OR b) AND c DO rest\n")
    cond = c.rules[0].condition
    assert isinstance(cond, And)
    assert isinstance(cond.operands[0], Or)


def test_chained_and_is_flat():
    c = parse("CONSTITUTION p\nRULE 1 r: WHEN a AND b AND c DO rest\n")
    cond = c.rules[0].condition
    assert isinstance(cond, And)
    assert len(cond.operands) == 3


def test_comments_and_blank_lines_skipped():
    c = parse("# leading comment\n\nCONSTITUTION x # inline\n\n"
              "RULE 1 r: WHEN ALWAYS DO rest # tail\n")
    assert c.name == "x"
    assert len(c.rules) == 1


def test_bare_predicate_and_explicit_empty_args_agree():
    a = parse("CONSTITUTION p\nRULE 1 r: WHEN hungry DO rest\n")
    b = parse("CONSTITUTION p\nRULE 1 r: WHEN hungry() DO rest\n")
    assert a == b


@pytest.mark.parametrize("text, fragment", [
    ("", "no CONSTITUTION header"),
    ("CONSTITUTION only_header\n", "no rules"),
    ("RULE 1 r: WHEN ALWAYS DO rest\n", "expected 'CONSTITUTION'"),
    ("CONSTITUTION p\nRULE 0 r: WHEN ALWAYS DO rest\n", "positive"),
    ("CONSTITUTION p\nRULE -3 r: WHEN ALWAYS DO rest\n", "positive integer"),
    ("CONSTITUTION p\nRULE 1.5 r: WHEN ALWAYS DO rest\n", "positive integer"),
    ("CONSTITUTION p\nRULE 1 r: WHEN ALWAYS DO rest\n"
     "RULE 1 s: WHEN ALWAYS DO rest\n", "duplicate priority"),
    ("CONSTITUTION p\nRULE 1 r: WHEN DO rest\n", "expected condition"),
    ("CONSTITUTION p\nRULE 1 r: WHEN x < DO rest\n", "expected number"),
    ("CONSTITUTION p\nRULE 1 r: WHEN (a OR b DO rest\n", "expected ')'"),
    ("CONSTITUTION p\nRULE 1 r: WHEN a DO rest extra\n", "trailing"),
    ("CONSTITUTION p\nRULE 1 r: WHEN a DO\n", "unexpected end of line"),
    ("CONSTITUTION p\nRULE 1 WHEN: WHEN a DO rest\n", "expected rule name"),
    ("CONSTITUTION p\nRULE 1 r: WHEN 1.2.3 < 1 DO rest\n", "malformed number"),
    ("CONSTITUTION p\nRULE 1 r: WHEN a DO give(x;y)\n", "unknown token"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError) as err:
        parse(text)
    assert fragment in str(err.value)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse("CONSTITUTION p\nRULE 1 r: WHEN x < DO rest\n")
    assert err.value.line == 2
    assert err.value.col > 0


def test_rule_count_cap():
    body = "".join(f"RULE {i} r{i}: WHEN ALWAYS DO rest\n"
                   for i in range(1, MAX_RULES + 2))
    with pytest.raises(ParseError) as err:
        parse("CONSTITUTION p\n" + body)
    assert "too many rules" in str(err.value)
    # Exactly at the cap is fine.
    body = "".join(f"RULE {i} r{i}: WHEN ALWAYS DO rest\n"
                   for i in range(1, MAX_RULES + 1))
    assert len(parse("CONSTITUTION p\n" + body).rules) == MAX_RULES


def test_condition_depth_cap():
    deep_ok = "NOT " * (MAX_COND_DEPTH - 1) + "x"
    c = parse(f"CONSTITUTION p\nRULE 1 r: WHEN {deep_ok} DO rest\n")
    assert cond_depth(c.rules[0].condition) == MAX_COND_DEPTH
    deep_bad = "NOT " * MAX_COND_DEPTH + "x"
    with pytest.raises(ParseError) as err:
        parse(f"CONSTITUTION p\nRULE 1 r: WHEN {deep_bad} DO rest\n")
    assert "depth" in str(err.value)


def test_serialize_canonical_form():
    c = parse("CONSTITUTION p\n"
              "RULE 1 r: WHEN (a OR b) AND wallet <= 20 DO punish(lowest_contributor, 5.5)\n")
    assert serialize(c) == ("CONSTITUTION p\n"
                            "RULE 1 r: WHEN (a OR b) AND wallet <= 20 "
                            "DO punish(lowest_contributor, 5.5)\n")


def test_serialize_integer_valued_floats_have_no_decimal_point():
    c = parse("CONSTITUTION p\nRULE 1 r: WHEN wallet < 20.0 DO contribute(1.0)\n")
    text = serialize(c)
    assert "wallet < 20 " in text
    assert "contribute(1)" in text


def test_roundtrip_random_corpus():
    rng = random.Random(90210)
    for _ in range(2000):
        c = random_constitution(rng)
        assert parse(serialize(c)) == c


def test_roundtrip_preserves_nested_same_precedence_groups():
    c = parse("CONSTITUTION p\nRULE 1 r: WHEN (a AND b) AND c DO rest\n")
    inner = c.rules[0].condition
    assert isinstance(inner, And) and isinstance(inner.operands[0], And)
    assert parse(serialize(c)) == c


def test_validate_clean_rules():
    c = parse("CONSTITUTION p\n"
              "RULE 1 r: WHEN has_freerider_streak(0.1, 2) DO punish(lowest_contributor, 5)\n"
              "RULE 2 s: WHEN wallet < 10 DO rest\n")
    assert validate(c, PGG_REGISTRY).ok


@pytest.mark.parametrize("line, kind", [
    ("RULE 1 r: WHEN no_such_pred DO rest", "unknown_predicate"),
    ("RULE 1 r: WHEN no_such_metric < 3 DO rest", "unknown_metric"),
    ("RULE 1 r: WHEN ALWAYS DO no_such_action", "unknown_action"),
    ("RULE 1 r: WHEN has_freerider_streak(0.1) DO rest", "arity"),
    ("RULE 1 r: WHEN ALWAYS DO contribute(0.5, 2)", "arity"),
    ("RULE 1 r: WHEN ALWAYS DO contribute(1.5)", "arg_domain"),
    ("RULE 1 r: WHEN ALWAYS DO punish(nobody, 5)", "arg_domain"),
    ("RULE 1 r: WHEN ALWAYS DO punish(lowest_contributor, -1)", "arg_domain"),
    ("RULE 1 r: WHEN has_freerider_streak(0.1, 2.5) DO rest", "arg_domain"),
    ("RULE 1 r: WHEN ALWAYS DO broadcast(7)", "arg_domain"),
])
def test_validate_issue_kinds(line, kind):
    report = validate(parse(f"CONSTITUTION p\n{line}\n"), PGG_REGISTRY)
    assert not report.ok
    assert report.issues[0].kind == kind
    assert kind in report.summary()


def test_validate_collects_multiple_issues():
    c = parse("CONSTITUTION p\n"
              "RULE 1 r: WHEN bogus DO rest\n"
              "RULE 2 s: WHEN ALWAYS DO zap\n")
    report = validate(c, PGG_REGISTRY)
    assert len(report.issues) == 2


def test_grid_vocabulary_validates():
    c = parse("CONSTITUTION g\n"
              "RULE 1 a: WHEN carrying(any_needed) DO deposit\n"
              "RULE 2 b: WHEN adjacent_to(non_ally_heuristic) AND ally_nearby "
              "DO attack(adjacent_non_ally)\n"
              "RULE 3 c: WHEN team_deficit_largest(gems) DO move_toward(deficit_resource)\n"
              "RULE 4 d: WHEN ALWAYS DO give(adjacent_ally, any_carried)\n")
    assert validate(c, GRID_REGISTRY).ok
    wrong_env = validate(c, PGG_REGISTRY)
    assert not wrong_env.ok


def test_constructed_constitution_serializes():
    c = Constitution("built", (
        Rule(3, "only", Or((PredicateCall("p"), Not(ALWAYS))), parse(
            "CONSTITUTION t\nRULE 1 r: WHEN ALWAYS DO move_toward(nearest_ally)\n"
        ).rules[0].action),
    ))
    assert parse(serialize(c)) == c
