"""Behavioral faction inference for the grid world.

Factions are hidden: observations never carry another agent's faction label.
Agents instead classify each other from two public signals:

* depositing to a faction's project is ally evidence for that faction and
  non-ally evidence for every other faction;
* attacking or stealing from the observer, or from an agent the observer
  already has ally evidence for, is non-ally evidence.

Non-ally evidence outranks ally evidence (a saboteur may deposit once to
blend in, then attack). Agents with no evidence stay unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Faction(str, Enum):
    BLUE = "blue"
    RED = "red"

    @property
    def other(self) -> "Faction":
        return Faction.RED if self is Faction.BLUE else Faction.BLUE


ALLY = "ally"
NON_ALLY = "non_ally"
UNKNOWN = "unknown"


@dataclass
class IdentityTracker:
    """Accumulates public evidence and answers per-observer classifications."""

    deposited_to: dict[int, set[Faction]] = field(default_factory=dict)
    aggressed: dict[int, set[int]] = field(default_factory=dict)  # actor -> targets

    def record_deposit(self, agent: int, project_faction: Faction):
        self.deposited_to.setdefault(agent, set()).add(project_faction)

    def record_aggression(self, actor: int, target: int):
        self.aggressed.setdefault(actor, set()).add(target)

    def _has_ally_evidence(self, faction: Faction, subject: int) -> bool:
        return faction in self.deposited_to.get(subject, ())

    def classify(self, observer: int, observer_faction: Faction, subject: int) -> str:
        """Classification of subject as seen by observer; never peeks at labels."""
        if subject == observer:
            return ALLY
        deposits = self.deposited_to.get(subject, set())
        non_ally = bool(deposits - {observer_faction})
        if not non_ally:
            for target in self.aggressed.get(subject, ()):
                if target == observer or self._has_ally_evidence(observer_faction, target):
                    non_ally = True
                    break
        if non_ally:
            return NON_ALLY
        if observer_faction in deposits:
            return ALLY
        return UNKNOWN


@dataclass(frozen=True)
class RevealedIdentities:
    """Label-access override for upper-bound runs: true factions, no inference."""

    factions: dict[int, Faction]

    def classify(self, observer: int, observer_faction: Faction, subject: int) -> str:
        return ALLY if self.factions[subject] == observer_faction else NON_ALLY
