"""Mutation operator backed by a chat-completion HTTP service.

The operator turns a parent constitution plus run context into a prompt,
posts it to the configured endpoint, and pulls the first fenced code block
out of the reply. Network trouble and block-less replies are operator
failures the search layer counts and survives; parsing and validating the
block happens in the search gate, not here.

The API key is read from a named environment variable at request time and
appears nowhere else: not in configs, logs, or checkpoints.
"""

from __future__ import annotations

import logging
import os
import random
import time
from dataclasses import dataclass, field

import requests

from .dsl import Constitution, ParseError, Registry, parse, serialize, validate
from .search import MutationProposal, REJECT_NETWORK, REJECT_NO_BLOCK

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "CONSTARENA_API_KEY"
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class LlmNetworkError(Exception):
    pass


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str = "https://openrouter.ai/api/v1/chat/completions"
    model: str = "openrouter/auto"
    temperature: float = 1.0
    max_retries: int = 3
    timeout: float = 60.0
    backoff_base: float = 0.5
    api_key_env: str = DEFAULT_API_KEY_ENV

    def __post_init__(self):
        if self.temperature < 0 or self.max_retries < 0:
            raise ValueError("temperature and max_retries must be non-negative")


def grammar_card(registry: Registry) -> str:
    """Deterministic one-page reference for the environment's vocabulary."""
    lines = [
        "Constitution format, one statement per line:",
        "  CONSTITUTION <name>",
        "  RULE <priority> <name>: WHEN <condition> DO <action>",
        "Conditions combine with AND, OR, NOT, parentheses; ALWAYS matches.",
        "Rules fire first-match in ascending priority; at most 32 rules.",
        "",
        f"Environment: {registry.environment}",
        "Metrics (compare with < <= > >= ==):",
    ]
    for name in sorted(registry.metrics):
        lines.append(f"  {name}")
    lines.append("Predicates:")
    for name in sorted(registry.predicates):
        sig = registry.predicates[name]
        args = ", ".join(_param_brief(p) for p in sig.params)
        lines.append(f"  {name}({args})" if args else f"  {name}")
    lines.append("Actions:")
    for name in sorted(registry.actions):
        sig = registry.actions[name]
        args = ", ".join(_param_brief(p) for p in sig.params)
        lines.append(f"  {name}({args})" if args else f"  {name}")
    return "\n".join(lines)


def _param_brief(param) -> str:
    if param.kind == "choice":
        return "|".join(param.choices)
    return param.kind


@dataclass(frozen=True)
class MutationContext:
    own_constitution: str  # DSL text
    opponent_log: tuple[str, ...]  # filtered action lines
    fitness_history: tuple[float, ...]  # most recent last, at most 5
    mode_description: str
    grammar: str


def filter_action_records(records: list[dict], info_condition: str,
                          faction_slot: str, blue_ids: frozenset[int],
                          red_ids: frozenset[int]) -> list[dict]:
    """Restricts per-agent action records to what a faction's operator may see.

    full: everything. own_team: only the slot's own agents. asymmetric: Red
    sees everything, Blue sees only Blue.
    """
    if info_condition == "full":
        allowed = blue_ids | red_ids
    elif info_condition == "own_team":
        allowed = blue_ids if faction_slot == "blue" else red_ids
    elif info_condition == "asymmetric":
        allowed = (blue_ids | red_ids) if faction_slot == "red" else blue_ids
    else:
        raise ValueError(f"unknown info condition {info_condition!r}")
    return [r for r in records if r.get("agent") in allowed]


def render_log_lines(records: list[dict], limit: int = 60) -> tuple[str, ...]:
    lines = []
    for r in records[-limit:]:
        bits = [f"t={r.get('t')}", f"agent_{r.get('agent')}", str(r.get("action"))]
        if r.get("outcome"):
            bits.append(str(r["outcome"]))
        lines.append(" ".join(bits))
    return tuple(lines)


PROMPT_HEADER = (
    "You are revising the rulebook that governs one faction's agents in a "
    "two-faction game. Improve the rulebook toward the stated objective. "
    "Reply with exactly one fenced code block containing the complete "
    "revised rulebook and nothing else inside the fences."
)


def build_prompt(ctx: MutationContext) -> str:
    parts = [
        PROMPT_HEADER,
        "",
        "Objective: " + ctx.mode_description,
        "",
        "Grammar:",
        ctx.grammar,
        "",
        "Current rulebook:",
        "```",
        ctx.own_constitution.rstrip("\n"),
        "```",
    ]
    if ctx.fitness_history:
        history = ", ".join(f"{f:+.3f}" for f in ctx.fitness_history)
        parts += ["", f"Recent fitness (oldest first): {history}"]
    if ctx.opponent_log:
        parts += ["", "Observed actions (excerpt):"]
        parts += [f"  {line}" for line in ctx.opponent_log]
    parts += ["", "Emit the improved rulebook now."]
    return "\n".join(parts)


def request_completion(prompt: str, cfg: LlmConfig,
                       sleep_fn=time.sleep) -> str:
    """POSTs a chat-completion request; retries 429/5xx with backoff.

    Raises LlmNetworkError once retries are exhausted or the reply is not a
    well-formed completion payload.
    """
    payload = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(cfg.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    last_error = "no attempt made"
    for attempt in range(cfg.max_retries + 1):
        try:
            response = requests.post(cfg.endpoint, json=payload, headers=headers,
                                     timeout=cfg.timeout)
        except requests.RequestException as exc:
            last_error = f"request failed: {exc}"
            response = None
        if response is not None:
            if response.status_code == 200:
                try:
                    body = response.json()
                    return body["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise LlmNetworkError(f"malformed completion payload: {exc}") from exc
            last_error = f"status {response.status_code}"
            if response.status_code not in RETRYABLE_STATUSES:
                raise LlmNetworkError(f"unretryable response: {last_error}")
        if attempt < cfg.max_retries:
            delay = cfg.backoff_base * (2 ** attempt)
            logger.warning("completion attempt %d failed (%s); retrying in %.2fs",
                           attempt + 1, last_error, delay)
            sleep_fn(delay)
    raise LlmNetworkError(f"gave up after {cfg.max_retries + 1} attempts: {last_error}")


def extract_first_fenced_block(text: str) -> str | None:
    """Returns the body of the first ``` fence, tolerant of language tags."""
    lines = text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if line.strip().startswith("```"):
            start = i
            break
    if start is None:
        return None
    body = []
    for line in lines[start + 1:]:
        if line.strip().startswith("```"):
            return "\n".join(body) + "\n"
        body.append(line)
    return None  # unterminated fence


def extract_and_validate(response: str,
                         registry: Registry) -> tuple[Constitution | None, str | None]:
    """(constitution, None) on success, else (None, rejection reason)."""
    block = extract_first_fenced_block(response)
    if block is None:
        return None, "no_block"
    try:
        constitution = parse(block)
    except ParseError:
        return None, "parse"
    if not validate(constitution, registry).ok:
        return None, "validate"
    return constitution, None


@dataclass
class LlmMutator:
    """Search-facing operator: context + HTTP completion -> raw DSL proposal."""

    config: LlmConfig
    registry: Registry
    mode_description: str
    opponent_log: tuple[str, ...] = ()
    fitness_history: tuple[float, ...] = ()
    sleep_fn: object = time.sleep
    prompts_sent: list[str] = field(default_factory=list)

    def context_for(self, parent: Constitution) -> MutationContext:
        return MutationContext(
            own_constitution=serialize(parent),
            opponent_log=self.opponent_log,
            fitness_history=self.fitness_history[-5:],
            mode_description=self.mode_description,
            grammar=grammar_card(self.registry),
        )

    def propose(self, parent: Constitution, rng: random.Random) -> MutationProposal:
        del rng  # sampling temperature lives server-side
        prompt = build_prompt(self.context_for(parent))
        self.prompts_sent.append(prompt)
        try:
            response = request_completion(prompt, self.config, sleep_fn=self.sleep_fn)
        except LlmNetworkError as exc:
            logger.warning("mutation request failed: %s", exc)
            return MutationProposal(failure=REJECT_NETWORK)
        block = extract_first_fenced_block(response)
        if block is None:
            return MutationProposal(failure=REJECT_NO_BLOCK)
        return MutationProposal(text=block)
