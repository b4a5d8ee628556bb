"""Adversarial co-evolution of rulebook-governed agents.

Two factions, Blue and Red, each act under a small interpreted constitution
of WHEN/DO rules.  An alternating evolutionary loop mutates each side's
constitution against the other's latest version, scores the results in a
public-goods game or a grid resource race, and checkpoints every generation
for deterministic resume.
"""

from .coevolution import GenerationRecord, RunConfig, run
from .dsl import Constitution, ParseError, Rule, parse, serialize, validate
from .envs import EnvSpec, Faction
from .scoring import (ABSOLUTE, ADVANTAGE, PURE_ADVERSARY, ScoreBreakdown,
                      fitness, stability_score)
from .search import EvolveConfig, evaluate, openevolve_step

__version__ = "0.1.0"

__all__ = [
    "ABSOLUTE",
    "ADVANTAGE",
    "PURE_ADVERSARY",
    "Constitution",
    "EnvSpec",
    "EvolveConfig",
    "Faction",
    "GenerationRecord",
    "ParseError",
    "Rule",
    "RunConfig",
    "ScoreBreakdown",
    "evaluate",
    "fitness",
    "openevolve_step",
    "parse",
    "run",
    "serialize",
    "stability_score",
    "validate",
    "__version__",
]
