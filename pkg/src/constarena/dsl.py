"""Priority-ordered rule constitutions: expression types, parser, validator, serializer.

A constitution is a named, priority-ordered list of ``RULE`` lines. Each rule
pairs a boolean condition over observation predicates/metrics with exactly one
action. The text format is line-oriented::

    # comment
    CONSTITUTION some_name
    RULE 1 rule_name: WHEN group_avg_contrib < 0.3 AND NOT was_punished_last_round DO contribute(0.2)
    RULE 2 fallback_rule: WHEN ALWAYS DO rest

Rules evaluate first-match in ascending priority order. Parsing is the
validation gate: any text that parses and validates against a registry is
executable; anything else is rejected before it can reach an archive or a
checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

MAX_RULES = 32
MAX_COND_DEPTH = 8

COMPARATORS = ("<=", ">=", "==", "<", ">")

KEYWORDS = frozenset({"CONSTITUTION", "RULE", "WHEN", "DO", "AND", "OR", "NOT", "ALWAYS"})


class ParseError(Exception):
    """Raised on malformed constitution text. Carries 1-based line/column."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Expression tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Always:
    pass


@dataclass(frozen=True)
class PredicateCall:
    name: str
    args: tuple[float | str, ...] = ()


@dataclass(frozen=True)
class MetricCompare:
    metric: str
    op: str  # one of COMPARATORS
    value: float


@dataclass(frozen=True)
class Not:
    operand: "CondExpr"


@dataclass(frozen=True)
class And:
    operands: tuple["CondExpr", ...]


@dataclass(frozen=True)
class Or:
    operands: tuple["CondExpr", ...]


CondExpr = Always | PredicateCall | MetricCompare | Not | And | Or

ALWAYS = Always()


@dataclass(frozen=True)
class ActExpr:
    name: str
    args: tuple[float | str, ...] = ()


@dataclass(frozen=True)
class Rule:
    priority: int
    name: str
    condition: CondExpr
    action: ActExpr


@dataclass(frozen=True)
class Constitution:
    name: str
    rules: tuple[Rule, ...]  # sorted ascending by priority


def rule_count(c: Constitution) -> int:
    return len(c.rules)


def cond_depth(expr: CondExpr) -> int:
    if isinstance(expr, Not):
        return 1 + cond_depth(expr.operand)
    if isinstance(expr, (And, Or)):
        return 1 + max(cond_depth(op) for op in expr.operands)
    return 1


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT | NUMBER | SYMBOL
    text: str
    line: int
    col: int


def _tokenize_line(text: str, line_no: int) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "#":
            break
        if ch.isspace():
            i += 1
            continue
        col = i + 1
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("IDENT", text[i:j], line_no, col))
            i = j
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            lit = text[i:j]
            if lit.count(".") > 1:
                raise ParseError(f"malformed number {lit!r}", line_no, col)
            tokens.append(_Token("NUMBER", lit, line_no, col))
            i = j
            continue
        two = text[i:i + 2]
        if two in ("<=", ">=", "=="):
            tokens.append(_Token("SYMBOL", two, line_no, col))
            i += 2
            continue
        if ch in "<>(),:":
            tokens.append(_Token("SYMBOL", ch, line_no, col))
            i += 1
            continue
        raise ParseError(f"unknown token {ch!r}", line_no, col)
    return tokens


class _TokenStream:
    def __init__(self, tokens: list[_Token], line_no: int):
        self.tokens = tokens
        self.pos = 0
        self.line_no = line_no

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            last_col = self.tokens[-1].col + len(self.tokens[-1].text) if self.tokens else 1
            raise ParseError("unexpected end of line", self.line_no, last_col)
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def expect_ident(self, role: str) -> _Token:
        tok = self.next()
        if tok.kind != "IDENT" or tok.text in KEYWORDS:
            raise ParseError(f"expected {role}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _parse_number(tok: _Token) -> float:
    try:
        return float(tok.text)
    except ValueError:
        raise ParseError(f"malformed number {tok.text!r}", tok.line, tok.col) from None


def _parse_args(ts: _TokenStream) -> tuple[float | str, ...]:
    """Parses a parenthesized, comma-separated list of numbers/identifiers."""
    ts.expect("(")
    args: list[float | str] = []
    tok = ts.peek()
    if tok is not None and tok.text == ")":
        ts.next()
        return ()
    while True:
        tok = ts.next()
        if tok.kind == "NUMBER":
            args.append(_parse_number(tok))
        elif tok.kind == "IDENT" and tok.text not in KEYWORDS:
            args.append(tok.text)
        else:
            raise ParseError(f"expected argument, found {tok.text!r}", tok.line, tok.col)
        tok = ts.next()
        if tok.text == ")":
            break
        if tok.text != ",":
            raise ParseError(f"expected ',' or ')', found {tok.text!r}", tok.line, tok.col)
    return tuple(args)


def _parse_atom(ts: _TokenStream) -> CondExpr:
    tok = ts.peek()
    if tok is None:
        raise ParseError("condition ended unexpectedly", ts.line_no, 1)
    if tok.text == "(":
        ts.next()
        inner = _parse_or(ts)
        ts.expect(")")
        return inner
    if tok.text == "ALWAYS":
        ts.next()
        return ALWAYS
    if tok.text == "NOT":
        ts.next()
        return Not(_parse_atom(ts))
    if tok.kind != "IDENT" or tok.text in KEYWORDS:
        raise ParseError(f"expected condition, found {tok.text!r}", tok.line, tok.col)
    name = ts.next().text
    nxt = ts.peek()
    if nxt is not None and nxt.text == "(":
        return PredicateCall(name, _parse_args(ts))
    if nxt is not None and nxt.text in COMPARATORS:
        op = ts.next().text
        num = ts.next()
        if num.kind != "NUMBER":
            raise ParseError(f"expected number after {op!r}, found {num.text!r}", num.line, num.col)
        return MetricCompare(name, op, _parse_number(num))
    return PredicateCall(name, ())


def _parse_and(ts: _TokenStream) -> CondExpr:
    operands = [_parse_atom(ts)]
    while True:
        tok = ts.peek()
        if tok is not None and tok.text == "AND":
            ts.next()
            operands.append(_parse_atom(ts))
        else:
            break
    return operands[0] if len(operands) == 1 else And(tuple(operands))


def _parse_or(ts: _TokenStream) -> CondExpr:
    operands = [_parse_and(ts)]
    while True:
        tok = ts.peek()
        if tok is not None and tok.text == "OR":
            ts.next()
            operands.append(_parse_and(ts))
        else:
            break
    return operands[0] if len(operands) == 1 else Or(tuple(operands))


def _parse_rule(ts: _TokenStream) -> Rule:
    ts.expect("RULE")
    prio_tok = ts.next()
    if prio_tok.kind != "NUMBER" or "." in prio_tok.text or prio_tok.text.startswith("-"):
        raise ParseError(f"expected positive integer priority, found {prio_tok.text!r}",
                         prio_tok.line, prio_tok.col)
    priority = int(prio_tok.text)
    if priority <= 0:
        raise ParseError(f"priority must be positive, got {priority}", prio_tok.line, prio_tok.col)
    name = ts.expect_ident("rule name").text
    ts.expect(":")
    ts.expect("WHEN")
    condition = _parse_or(ts)
    depth = cond_depth(condition)
    if depth > MAX_COND_DEPTH:
        raise ParseError(f"condition depth {depth} exceeds limit {MAX_COND_DEPTH}",
                         ts.line_no, 1)
    ts.expect("DO")
    act_tok = ts.expect_ident("action name")
    nxt = ts.peek()
    args = _parse_args(ts) if nxt is not None and nxt.text == "(" else ()
    if not ts.done():
        trailing = ts.next()
        raise ParseError(f"unexpected trailing token {trailing.text!r}", trailing.line, trailing.col)
    return Rule(priority, name, condition, ActExpr(act_tok.text, args))


def parse(text: str) -> Constitution:
    """Parses DSL source into a Constitution; raises ParseError on bad input."""
    header: str | None = None
    rules: list[Rule] = []
    seen_priorities: dict[int, int] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokenize_line(raw, line_no)
        if not tokens:
            continue
        ts = _TokenStream(tokens, line_no)
        if header is None:
            ts.expect("CONSTITUTION")
            header = ts.expect_ident("constitution name").text
            if not ts.done():
                trailing = ts.next()
                raise ParseError(f"unexpected trailing token {trailing.text!r}",
                                 trailing.line, trailing.col)
            continue
        rule = _parse_rule(ts)
        if rule.priority in seen_priorities:
            raise ParseError(
                f"duplicate priority {rule.priority} (first used on line "
                f"{seen_priorities[rule.priority]})", line_no, 1)
        seen_priorities[rule.priority] = line_no
        rules.append(rule)
    if header is None:
        raise ParseError("empty constitution: no CONSTITUTION header", 1, 1)
    if not rules:
        raise ParseError("empty constitution: no rules", 1, 1)
    if len(rules) > MAX_RULES:
        raise ParseError(f"too many rules: {len(rules)} > {MAX_RULES}", 1, 1)
    rules.sort(key=lambda r: r.priority)
    return Constitution(header, tuple(rules))


# ---------------------------------------------------------------------------
# Serializer
# ---------------------------------------------------------------------------

def _format_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _format_arg(a: float | str) -> str:
    return a if isinstance(a, str) else _format_number(a)


def _cond_precedence(expr: CondExpr) -> int:
    if isinstance(expr, Or):
        return 1
    if isinstance(expr, And):
        return 2
    if isinstance(expr, Not):
        return 3
    return 4


def _format_cond(expr: CondExpr, parent_prec: int = 0) -> str:
    prec = _cond_precedence(expr)
    if isinstance(expr, Always):
        out = "ALWAYS"
    elif isinstance(expr, PredicateCall):
        if expr.args:
            out = f"{expr.name}({', '.join(_format_arg(a) for a in expr.args)})"
        else:
            out = expr.name
    elif isinstance(expr, MetricCompare):
        out = f"{expr.metric} {expr.op} {_format_number(expr.value)}"
    elif isinstance(expr, Not):
        out = f"NOT {_format_cond(expr.operand, prec)}"
    elif isinstance(expr, And):
        out = " AND ".join(_format_cond(op, prec) for op in expr.operands)
    elif isinstance(expr, Or):
        out = " OR ".join(_format_cond(op, prec) for op in expr.operands)
    else:  # pragma: no cover - exhaustive
        raise TypeError(f"unknown condition node {expr!r}")
    if prec < parent_prec or (isinstance(expr, (And, Or)) and parent_prec == prec):
        return f"({out})"
    return out


def format_action(act: ActExpr) -> str:
    """Render an action expression the way the serializer would."""
    if act.args:
        return f"{act.name}({', '.join(_format_arg(a) for a in act.args)})"
    return act.name


def serialize(c: Constitution) -> str:
    """Canonical, byte-stable text for a Constitution; parse(serialize(c)) == c."""
    lines = [f"CONSTITUTION {c.name}"]
    for rule in c.rules:
        lines.append(
            f"RULE {rule.priority} {rule.name}: "
            f"WHEN {_format_cond(rule.condition)} DO {format_action(rule.action)}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Registry and validator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamSpec:
    """Declared domain of one predicate/action argument."""

    kind: str  # fraction | amount | count | choice | token
    choices: tuple[str, ...] = ()

    def check(self, value: float | str) -> str | None:
        """Returns an error message for a bad value, else None."""
        if self.kind == "fraction":
            if isinstance(value, str):
                return f"expected a fraction, got identifier {value!r}"
            if not (0.0 <= value <= 1.0):
                return f"fraction {value} out of [0, 1]"
        elif self.kind == "amount":
            if isinstance(value, str):
                return f"expected a positive number, got identifier {value!r}"
            if value <= 0:
                return f"amount {value} must be positive"
        elif self.kind == "count":
            if isinstance(value, str):
                return f"expected a positive integer, got identifier {value!r}"
            if value != int(value) or value < 1:
                return f"count {value} must be a positive integer"
        elif self.kind == "choice":
            if not isinstance(value, str):
                return f"expected one of {self.choices}, got number {value}"
            if value not in self.choices:
                return f"{value!r} not in {self.choices}"
        elif self.kind == "token":
            if not isinstance(value, str):
                return f"expected an identifier token, got number {value}"
        return None


@dataclass(frozen=True)
class PredicateSig:
    params: tuple[ParamSpec, ...] = ()


@dataclass(frozen=True)
class MetricSig:
    domain: str = "number"  # fraction | count | number


@dataclass(frozen=True)
class ActionSig:
    params: tuple[ParamSpec, ...] = ()


@dataclass(frozen=True)
class Registry:
    """Vocabulary one environment exposes to constitutions."""

    environment: str
    predicates: dict[str, PredicateSig]
    metrics: dict[str, MetricSig]
    actions: dict[str, ActionSig]
    rule_templates: tuple[str, ...] = ()  # "WHEN ... DO ..." bodies for mutation inserts


@dataclass(frozen=True)
class ValidationIssue:
    kind: str  # unknown_predicate | unknown_metric | unknown_action | arity | arg_domain
    rule: str
    message: str


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def summary(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(f"[{i.kind}] {i.rule}: {i.message}" for i in self.issues)


def _validate_cond(expr: CondExpr, registry: Registry, rule: str, issues: list[ValidationIssue]):
    if isinstance(expr, Always):
        return
    if isinstance(expr, Not):
        _validate_cond(expr.operand, registry, rule, issues)
        return
    if isinstance(expr, (And, Or)):
        for op in expr.operands:
            _validate_cond(op, registry, rule, issues)
        return
    if isinstance(expr, MetricCompare):
        if expr.metric not in registry.metrics:
            issues.append(ValidationIssue("unknown_metric", rule,
                                          f"unknown metric {expr.metric!r}"))
        return
    assert isinstance(expr, PredicateCall)
    sig = registry.predicates.get(expr.name)
    if sig is None:
        issues.append(ValidationIssue("unknown_predicate", rule,
                                      f"unknown predicate {expr.name!r}"))
        return
    if len(expr.args) != len(sig.params):
        issues.append(ValidationIssue(
            "arity", rule,
            f"predicate {expr.name!r} takes {len(sig.params)} args, got {len(expr.args)}"))
        return
    for idx, (spec, value) in enumerate(zip(sig.params, expr.args)):
        err = spec.check(value)
        if err:
            issues.append(ValidationIssue(
                "arg_domain", rule, f"predicate {expr.name!r} arg {idx + 1}: {err}"))


def validate(c: Constitution, registry: Registry) -> ValidationReport:
    """Checks every rule against the registry; an empty report means executable."""
    issues: list[ValidationIssue] = []
    for rule in c.rules:
        label = f"rule {rule.priority} ({rule.name})"
        _validate_cond(rule.condition, registry, label, issues)
        sig = registry.actions.get(rule.action.name)
        if sig is None:
            issues.append(ValidationIssue("unknown_action", label,
                                          f"unknown action {rule.action.name!r}"))
            continue
        if len(rule.action.args) != len(sig.params):
            issues.append(ValidationIssue(
                "arity", label,
                f"action {rule.action.name!r} takes {len(sig.params)} args, "
                f"got {len(rule.action.args)}"))
            continue
        for idx, (spec, value) in enumerate(zip(sig.params, rule.action.args)):
            err = spec.check(value)
            if err:
                issues.append(ValidationIssue(
                    "arg_domain", label, f"action {rule.action.name!r} arg {idx + 1}: {err}"))
    return ValidationReport(issues)
