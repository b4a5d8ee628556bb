"""Stability score and the three fitness targets.

The stability score folds a faction's productivity, survival, and internal
conflict into one scalar: S = alpha*P + beta*V - gamma*C_ff. With the default
weights S spans [-0.2, 0.8] and is deliberately not clamped; sub-zero scores
mark factions that hurt themselves more than they produce.

Fitness is what search optimizes and is mode-dependent; the score itself is
reported identically under every mode.
"""

from __future__ import annotations

from dataclasses import dataclass

from .envs import Faction

ABSOLUTE = "absolute"
ADVANTAGE = "advantage"
PURE_ADVERSARY = "pure_adversary"
FITNESS_MODES = (ABSOLUTE, ADVANTAGE, PURE_ADVERSARY)


class ScoringError(Exception):
    pass


@dataclass(frozen=True)
class ScoreWeights:
    alpha: float = 0.5
    beta: float = 0.3
    gamma: float = 0.2

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ScoringError("weights must be non-negative")

    @property
    def is_canonical(self) -> bool:
        return (self.alpha, self.beta, self.gamma) == (0.5, 0.3, 0.2)


CANONICAL_WEIGHTS = ScoreWeights()


@dataclass(frozen=True)
class ScoreBreakdown:
    progress: float
    viability: float
    friendly_fire: float
    score: float

    @classmethod
    def from_components(cls, progress: float, viability: float, friendly_fire: float,
                        weights: ScoreWeights = CANONICAL_WEIGHTS) -> "ScoreBreakdown":
        return cls(progress, viability, friendly_fire,
                   stability_score(progress, viability, friendly_fire, weights))


def stability_score(progress: float, viability: float, friendly_fire: float,
                    weights: ScoreWeights = CANONICAL_WEIGHTS) -> float:
    """Weighted sum, no clamping; errors if any component leaves [0, 1]."""
    for label, value in (("progress", progress), ("viability", viability),
                         ("friendly_fire", friendly_fire)):
        if not (0.0 <= value <= 1.0):
            raise ScoringError(f"{label} component {value} out of [0, 1]")
    return (weights.alpha * progress + weights.beta * viability
            - weights.gamma * friendly_fire)


def fitness(s_own: float, s_opp: float, mode: str,
            faction: Faction = Faction.RED) -> float:
    """Search target under the given mode; pure_adversary is Red-only."""
    if mode == ABSOLUTE:
        return s_own
    if mode == ADVANTAGE:
        return s_own - s_opp
    if mode == PURE_ADVERSARY:
        if faction is not Faction.RED:
            raise ScoringError("pure_adversary fitness is defined for Red only")
        return 1.0 - s_opp
    raise ScoringError(f"unknown fitness mode {mode!r}")
