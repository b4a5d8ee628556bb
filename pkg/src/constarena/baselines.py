"""Reference opponents: a hand-coded hunter and the shipped seed rulebooks.

The hunter is a controller, not a constitution: it bypasses the rule engine
and directly picks grid actions. It chases the nearest agent it cannot prove
is an ally and attacks on contact; it never gathers or deposits, so its
faction scores on survival alone.
"""

from __future__ import annotations

import random

from .envs.grid import GridAction, GridObservation, greedy_step, manhattan
from .envs.identity import ALLY
from .seeds import SEED_NAMES, load_seed, seed_text

__all__ = ["hunt_and_kill", "load_seed", "seed_text", "SEED_NAMES"]


def hunt_and_kill(obs: GridObservation, rng: random.Random) -> GridAction:
    """Attack any adjacent not-proven-ally, else close on the nearest one.

    Targets include unclassified agents: with hidden identities a pure hunter
    that waited for positive hostility evidence would stand still against a
    passive opponent. Proven allies are never targeted.
    """
    del rng  # targeting is deterministic; combat rolls happen in the env
    candidates = [(agent_id, pos) for agent_id, pos, cls in obs.others()
                  if cls != ALLY]
    if not candidates:
        return GridAction("rest")
    adjacent = [agent_id for agent_id, pos in candidates
                if manhattan(pos, obs.position) == 1]
    if adjacent:
        return GridAction("attack", target=min(adjacent))
    target_id, target_pos = min(
        candidates, key=lambda c: (manhattan(c[1], obs.position), c[0]))
    return GridAction("move", move_to=greedy_step(obs.position, target_pos))
