"""Two-faction 8x8 grid world: gather, deposit, fight, with hidden identities.

Each faction fields three agents and races to finish two construction projects
(per project: 150 wood, 120 stone, 30 gems). Resources are scattered at twice
one faction's total requirement, so full mutual completion consumes the map.
Combat is probabilistic and lethal: a successful attack removes the target,
which drops its inventory where it stood. Factions are hidden; agents must
infer friend from foe behaviorally (see identity module).

A turn runs in fixed phases: moves, gathers, deposits/gives, steals, attacks,
communicates. Within a phase agents act in id order against the live state,
which keeps episodes deterministic for a given seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Union

from ..dsl import ActExpr, Constitution
from ..policy import decide
from ..rng import derived_rng
from .identity import ALLY, NON_ALLY, Faction, IdentityTracker, RevealedIdentities

KIND_ORDER = ("wood", "stone", "gems")
ATTACK_MEMORY_TURNS = 2  # how far back was_attacked_recently looks
ALLY_NEARBY_RADIUS = 2


class GridError(Exception):
    pass


@dataclass(frozen=True)
class GridConfig:
    width: int = 8
    height: int = 8
    turns: int = 40
    agents_per_faction: int = 3
    projects_per_faction: int = 2
    project_requirement: tuple[tuple[str, int], ...] = (
        ("wood", 150), ("stone", 120), ("gems", 30))
    attack_success_p: float = 0.25
    steal_success_p: float = 0.40
    coordination_gate: bool = False
    gate_solo_p: float = 0.05
    gate_coordinated_p: float = 0.60
    carry_capacity: int = 5
    spawn_multiplier: float = 2.0  # map stock as a multiple of one faction's needs
    reveal_factions: bool = False  # True grants true labels (upper-bound runs)

    def __post_init__(self):
        for p in (self.attack_success_p, self.steal_success_p,
                  self.gate_solo_p, self.gate_coordinated_p):
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"probability {p} out of [0, 1]")

    def faction_requirement(self) -> dict[str, int]:
        return {kind: amount * self.projects_per_faction
                for kind, amount in self.project_requirement}

    def required_total(self) -> int:
        return sum(self.faction_requirement().values())


@dataclass
class Agent:
    id: int
    faction: Faction
    x: int
    y: int
    alive: bool = True
    inventory: dict[str, int] = field(default_factory=dict)

    @property
    def pos(self) -> tuple[int, int]:
        return (self.x, self.y)

    def carried_total(self) -> int:
        return sum(self.inventory.values())


@dataclass
class GridAction:
    kind: str  # move | gather | deposit | give | steal | attack | communicate | rest
    target: int | None = None
    move_to: tuple[int, int] | None = None
    give_kind: str | None = None
    token: str | None = None


def manhattan(a: tuple[int, int], b: tuple[int, int]) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass
class GridState:
    config: GridConfig
    agents: list[Agent]
    cells: dict[tuple[int, int], dict[str, int]]
    deposits: dict[Faction, list[dict[str, int]]]  # per project tallies
    turn: int = 0  # completed turns
    tracker: IdentityTracker = field(default_factory=IdentityTracker)
    identities: RevealedIdentities | None = None  # set when reveal_factions
    attacks_on: dict[int, list[int]] = field(default_factory=dict)  # target -> turns
    events: list[dict] = field(default_factory=list)
    spawned: dict[str, int] = field(default_factory=dict)
    # counters[faction] = [agent_turns, aggressive_attempts, within_faction_attempts]
    counters: dict[Faction, list[int]] = field(
        default_factory=lambda: {f: [0, 0, 0] for f in (Faction.BLUE, Faction.RED)})

    def classify(self, observer: Agent, subject_id: int) -> str:
        source = self.identities if self.identities is not None else self.tracker
        return source.classify(observer.id, observer.faction, subject_id)

    def living(self, faction: Faction | None = None) -> list[Agent]:
        return [a for a in self.agents if a.alive
                and (faction is None or a.faction is faction)]

    def agent_by_id(self, agent_id: int) -> Agent:
        return self.agents[agent_id]

    def cell_stock(self, pos: tuple[int, int]) -> dict[str, int]:
        return self.cells.setdefault(pos, {})

    def faction_deficit(self, faction: Faction) -> dict[str, int]:
        need = {}
        for kind, amount in self.config.project_requirement:
            deposited = sum(p.get(kind, 0) for p in self.deposits[faction])
            need[kind] = amount * self.config.projects_per_faction - deposited
        return need

    def faction_deposited_total(self, faction: Faction) -> int:
        return sum(sum(p.values()) for p in self.deposits[faction])


def initial_state(config: GridConfig, seed: int) -> GridState:
    """Scatters resources and places agents from the layout RNG stream."""
    rng = derived_rng(seed, "layout")
    cells: dict[tuple[int, int], dict[str, int]] = {}
    spawned: dict[str, int] = {}
    for kind, per_project in config.project_requirement:
        units = int(round(per_project * config.projects_per_faction
                          * config.spawn_multiplier))
        spawned[kind] = units
        for _ in range(units):
            pos = (rng.randrange(config.width), rng.randrange(config.height))
            stock = cells.setdefault(pos, {})
            stock[kind] = stock.get(kind, 0) + 1

    n = config.agents_per_faction
    all_cells = [(x, y) for x in range(config.width) for y in range(config.height)]
    positions = rng.sample(all_cells, 2 * n)
    agents = []
    for i, pos in enumerate(positions):
        faction = Faction.BLUE if i < n else Faction.RED
        agents.append(Agent(i, faction, pos[0], pos[1]))

    state = GridState(
        config=config,
        agents=agents,
        cells=cells,
        deposits={f: [{} for _ in range(config.projects_per_faction)]
                  for f in (Faction.BLUE, Faction.RED)},
        spawned=spawned,
    )
    if config.reveal_factions:
        state.identities = RevealedIdentities({a.id: a.faction for a in agents})
    return state


def conservation_check(state: GridState) -> dict[str, tuple[int, int]]:
    """spawned vs (cells + carried + deposited) per kind; equal when conserved."""
    out = {}
    for kind in KIND_ORDER:
        located = sum(stock.get(kind, 0) for stock in state.cells.values())
        located += sum(a.inventory.get(kind, 0) for a in state.agents)
        located += sum(p.get(kind, 0)
                       for projects in state.deposits.values() for p in projects)
        out[kind] = (state.spawned.get(kind, 0), located)
    return out


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

class GridObservation:
    """Per-agent view: registry metrics/predicates plus classifier queries.

    Deliberately contains no faction labels for other agents; everything about
    others goes through the behavioral classifier.
    """

    def __init__(self, state: GridState, agent: Agent):
        self._state = state
        self._agent = agent

    @property
    def agent_id(self) -> int:
        return self._agent.id

    @property
    def position(self) -> tuple[int, int]:
        return self._agent.pos

    @property
    def turn(self) -> int:
        return self._state.turn + 1

    def others(self) -> list[tuple[int, tuple[int, int], str]]:
        """(id, position, classification) for every other living agent."""
        me = self._agent
        return [(a.id, a.pos, self._state.classify(me, a.id))
                for a in self._state.living() if a.id != me.id]

    def adjacent_others(self) -> list[tuple[int, tuple[int, int], str]]:
        return [(i, pos, cls) for i, pos, cls in self.others()
                if manhattan(pos, self._agent.pos) == 1]

    def metric(self, name: str) -> float:
        state, me = self._state, self._agent
        if name == "turn":
            return float(state.turn + 1)
        if name == "cell_resources_here":
            return float(sum(state.cell_stock(me.pos).values()))
        if name == "own_faction_progress":
            return (state.faction_deposited_total(me.faction)
                    / state.config.required_total())
        raise KeyError(name)

    def predicate(self, name: str, args: tuple[float | str, ...]) -> bool:
        state, me = self._state, self._agent
        if name == "carrying":
            what = str(args[0])
            if what == "any":
                return me.carried_total() > 0
            if what == "any_needed":
                deficit = state.faction_deficit(me.faction)
                return any(me.inventory.get(k, 0) > 0 and deficit[k] > 0
                           for k in KIND_ORDER)
            return me.inventory.get(what, 0) > 0
        if name == "team_deficit_largest":
            kind = str(args[0])
            deficit = state.faction_deficit(me.faction)
            return deficit[kind] == max(deficit.values()) and deficit[kind] > 0
        if name == "adjacent_to":
            wanted = str(args[0])
            for _, _, cls in self.adjacent_others():
                if (wanted == "any_other"
                        or (wanted == "non_ally_heuristic" and cls == NON_ALLY)
                        or (wanted == "ally_heuristic" and cls == ALLY)):
                    return True
            return False
        if name == "was_attacked_recently":
            current = state.turn + 1
            return any(current - t <= ATTACK_MEMORY_TURNS
                       for t in state.attacks_on.get(me.id, ()))
        if name == "ally_nearby":
            return any(cls == ALLY and manhattan(pos, me.pos) <= ALLY_NEARBY_RADIUS
                       for _, pos, cls in self.others())
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Action resolution: DSL action expression -> concrete grid action
# ---------------------------------------------------------------------------

def greedy_step(src: tuple[int, int], dst: tuple[int, int]) -> tuple[int, int]:
    x, y = src
    if dst[0] != x:
        return (x + (1 if dst[0] > x else -1), y)
    if dst[1] != y:
        return (x, y + (1 if dst[1] > y else -1))
    return src


def _nearest_cell(state: GridState, src: tuple[int, int],
                  kinds: tuple[str, ...]) -> tuple[int, int] | None:
    candidates = [pos for pos, stock in state.cells.items()
                  if any(stock.get(k, 0) > 0 for k in kinds)]
    if not candidates:
        return None
    return min(candidates, key=lambda pos: (manhattan(pos, src), pos))


def _nearest_agent(obs: GridObservation, classes: tuple[str, ...]) -> tuple[int, int] | None:
    candidates = [(pos, i) for i, pos, cls in obs.others() if cls in classes]
    if not candidates:
        return None
    pos, _ = min(candidates, key=lambda c: (manhattan(c[0], obs.position), c[1]))
    return pos


def _resolve_move_goal(state: GridState, obs: GridObservation,
                       goal: str) -> tuple[int, int] | None:
    me = state.agent_by_id(obs.agent_id)
    if goal == "nearest_resource":
        return _nearest_cell(state, me.pos, KIND_ORDER)
    if goal == "deficit_resource":
        deficit = state.faction_deficit(me.faction)
        top = max(deficit.values())
        for kind in KIND_ORDER:  # fixed order breaks deficit ties
            if deficit[kind] == top and top > 0:
                found = _nearest_cell(state, me.pos, (kind,))
                if found is not None:
                    return found
                break
        return _nearest_cell(state, me.pos, KIND_ORDER)
    if goal == "nearest_non_ally":
        return _nearest_agent(obs, (NON_ALLY,))
    if goal == "nearest_ally":
        return _nearest_agent(obs, (ALLY,))
    raise GridError(f"unknown move goal {goal!r}")


def _pick_adjacent(obs: GridObservation, selector: str,
                   rng: random.Random) -> int | None:
    adjacent = obs.adjacent_others()
    if selector == "adjacent_non_ally":
        pool = [i for i, _, cls in adjacent if cls == NON_ALLY]
    elif selector == "adjacent_ally":
        pool = [i for i, _, cls in adjacent if cls == ALLY]
    elif selector == "random_adjacent":
        pool = [i for i, _, _ in adjacent]
    else:
        raise GridError(f"unknown target selector {selector!r}")
    if not pool:
        return None
    return pool[0] if len(pool) == 1 else rng.choice(pool)


def resolve_action(state: GridState, obs: GridObservation, expr: ActExpr,
                   rng: random.Random) -> GridAction:
    """Binds a DSL action to concrete coordinates/targets against this state."""
    me = state.agent_by_id(obs.agent_id)
    name = expr.name
    if name in ("gather", "deposit", "rest"):
        return GridAction(name)
    if name == "communicate":
        return GridAction("communicate", token=str(expr.args[0]))
    if name == "move_random":
        steps = [(me.x + dx, me.y + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                 if 0 <= me.x + dx < state.config.width
                 and 0 <= me.y + dy < state.config.height]
        return GridAction("move", move_to=rng.choice(steps))
    if name == "move_toward":
        goal = _resolve_move_goal(state, obs, str(expr.args[0]))
        if goal is None:
            return GridAction("move", move_to=None)
        return GridAction("move", move_to=greedy_step(me.pos, goal))
    if name in ("attack", "steal"):
        return GridAction(name, target=_pick_adjacent(obs, str(expr.args[0]), rng))
    if name == "give":
        target = _pick_adjacent(obs, str(expr.args[0]), rng)
        return GridAction("give", target=target, give_kind=str(expr.args[1]))
    raise GridError(f"unknown action {name!r}")


# ---------------------------------------------------------------------------
# Turn execution
# ---------------------------------------------------------------------------

def _gather_kind(state: GridState, agent: Agent) -> str | None:
    stock = state.cell_stock(agent.pos)
    deficit = state.faction_deficit(agent.faction)
    present = [k for k in KIND_ORDER if stock.get(k, 0) > 0]
    if not present:
        return None
    needed = [k for k in present if deficit[k] > 0]
    pool = needed if needed else present
    return max(pool, key=lambda k: (deficit[k], -KIND_ORDER.index(k)))


def _deposit_all(state: GridState, agent: Agent) -> dict[str, int]:
    """Moves every needed carried unit into the faction's neediest projects."""
    moved: dict[str, int] = {}
    projects = state.deposits[agent.faction]
    requirement = dict(state.config.project_requirement)
    for kind in KIND_ORDER:
        units = agent.inventory.get(kind, 0)
        while units > 0:
            gaps = [(requirement[kind] - p.get(kind, 0), idx)
                    for idx, p in enumerate(projects)]
            gap, idx = max(gaps, key=lambda g: (g[0], -g[1]))
            if gap <= 0:
                break
            take = min(units, gap)
            projects[idx][kind] = projects[idx].get(kind, 0) + take
            units -= take
            moved[kind] = moved.get(kind, 0) + take
        if kind in moved:
            agent.inventory[kind] = agent.inventory.get(kind, 0) - moved[kind]
    return moved


def _drop_inventory(state: GridState, agent: Agent):
    stock = state.cell_stock(agent.pos)
    for kind, units in agent.inventory.items():
        if units > 0:
            stock[kind] = stock.get(kind, 0) + units
    agent.inventory = {}


def _attack_probability(state: GridState, attacker: Agent, target: Agent) -> float:
    cfg = state.config
    if not cfg.coordination_gate:
        return cfg.attack_success_p
    coordinated = any(
        a.alive and a.faction is attacker.faction and a.id != attacker.id
        and manhattan(a.pos, target.pos) == 1
        for a in state.agents)
    return cfg.gate_coordinated_p if coordinated else cfg.gate_solo_p


def _valid_target(state: GridState, actor: Agent, target_id: int | None) -> Agent | None:
    if target_id is None:
        return None
    target = state.agent_by_id(target_id)
    if not target.alive or manhattan(target.pos, actor.pos) != 1:
        return None
    return target


def step_turn(state: GridState, actions: dict[int, GridAction],
              rng: random.Random) -> GridState:
    """Executes one turn in place: moves, gathers, deposits/gives, steals,
    attacks, communicates; id order within each phase."""
    cfg = state.config
    turn = state.turn + 1
    events: dict[int, dict] = {}
    for agent_id in sorted(actions):
        agent = state.agent_by_id(agent_id)
        if not agent.alive:
            raise GridError(f"action submitted for dead agent {agent_id}")
        act = actions[agent_id]
        events[agent_id] = {"turn": turn, "agent": agent_id, "action": act.kind}
        state.counters[agent.faction][0] += 1
        if act.kind in ("attack", "steal") and act.target is not None:
            state.counters[agent.faction][1] += 1
            if state.agent_by_id(act.target).faction is agent.faction:
                state.counters[agent.faction][2] += 1

    def order(kind: str) -> list[tuple[Agent, GridAction]]:
        return [(state.agent_by_id(i), actions[i]) for i in sorted(actions)
                if actions[i].kind == kind]

    for agent, act in order("move"):
        ev = events[agent.id]
        if act.move_to is None:
            ev["outcome"] = "no_target"
            continue
        x, y = act.move_to
        if not (0 <= x < cfg.width and 0 <= y < cfg.height) \
                or manhattan(act.move_to, agent.pos) > 1:
            ev["outcome"] = "illegal_move"
            continue
        ev["from"], ev["to"] = agent.pos, act.move_to
        agent.x, agent.y = x, y
        ev["outcome"] = "moved"

    for agent, act in order("gather"):
        ev = events[agent.id]
        if agent.carried_total() >= cfg.carry_capacity:
            ev["outcome"] = "full"
            continue
        kind = _gather_kind(state, agent)
        if kind is None:
            ev["outcome"] = "empty_cell"
            continue
        stock = state.cell_stock(agent.pos)
        stock[kind] -= 1
        if stock[kind] == 0:
            del stock[kind]
        agent.inventory[kind] = agent.inventory.get(kind, 0) + 1
        ev["outcome"], ev["kind"] = "gathered", kind

    for agent, act in order("deposit"):
        ev = events[agent.id]
        moved = _deposit_all(state, agent)
        if moved:
            state.tracker.record_deposit(agent.id, agent.faction)
            ev["outcome"], ev["units"] = "deposited", moved
        else:
            ev["outcome"] = "nothing_to_deposit"

    for agent, act in order("give"):
        ev = events[agent.id]
        target = _valid_target(state, agent, act.target)
        if target is None:
            ev["outcome"] = "invalid_target"
            continue
        kind = act.give_kind
        if kind == "any_carried":
            kind = next((k for k in KIND_ORDER if agent.inventory.get(k, 0) > 0), None)
        if kind is None or agent.inventory.get(kind, 0) == 0:
            ev["outcome"] = "nothing_to_give"
            continue
        room = cfg.carry_capacity - target.carried_total()
        units = min(agent.inventory[kind], room)
        if units <= 0:
            ev["outcome"] = "receiver_full"
            continue
        agent.inventory[kind] -= units
        target.inventory[kind] = target.inventory.get(kind, 0) + units
        ev["outcome"], ev["target"], ev["kind"], ev["units"] = "gave", target.id, kind, units

    for agent, act in order("steal"):
        ev = events[agent.id]
        if not agent.alive:
            ev["outcome"] = "actor_dead"
            continue
        target = _valid_target(state, agent, act.target)
        ev["target"] = act.target
        if target is None:
            ev["outcome"] = "invalid_target"
            continue
        state.tracker.record_aggression(agent.id, target.id)
        if rng.random() >= cfg.steal_success_p:
            ev["outcome"] = "missed"
            continue
        loot = [k for k in KIND_ORDER for _ in range(target.inventory.get(k, 0))]
        if not loot:
            ev["outcome"] = "empty_handed"
            continue
        kind = rng.choice(loot)
        target.inventory[kind] -= 1
        if agent.carried_total() < cfg.carry_capacity:
            agent.inventory[kind] = agent.inventory.get(kind, 0) + 1
        else:  # no room: the unit spills onto the thief's cell
            stock = state.cell_stock(agent.pos)
            stock[kind] = stock.get(kind, 0) + 1
        ev["outcome"], ev["kind"] = "stole", kind

    for agent, act in order("attack"):
        ev = events[agent.id]
        if not agent.alive:
            ev["outcome"] = "actor_dead"
            continue
        target = _valid_target(state, agent, act.target)
        ev["target"] = act.target
        if target is None:
            ev["outcome"] = "invalid_target"
            continue
        state.tracker.record_aggression(agent.id, target.id)
        state.attacks_on.setdefault(target.id, []).append(turn)
        p = _attack_probability(state, agent, target)
        ev["p"] = p
        if rng.random() < p:
            target.alive = False
            _drop_inventory(state, target)
            ev["outcome"] = "killed"
        else:
            ev["outcome"] = "missed"

    for agent, act in order("communicate"):
        ev = events[agent.id]
        ev["outcome"], ev["token"] = "said", act.token

    for agent, act in order("rest"):
        events[agent.id]["outcome"] = "rested"

    state.events.extend(events[i] for i in sorted(events))
    state.turn = turn
    return state


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

Controller = Callable[[GridObservation, random.Random], GridAction]
GridPolicy = Union[Constitution, Controller]


@dataclass
class GridTrajectory:
    config: GridConfig
    seed: int
    info_condition: str
    final: GridState
    layout: dict
    rules_fired: list[dict[int, str]]  # per turn: agent id -> rule name

    @property
    def turns_executed(self) -> int:
        return self.final.turn

    def aggression_count(self, faction: Faction) -> int:
        return self.final.counters[faction][1]

    def agent_turns(self, faction: Faction) -> int:
        return self.final.counters[faction][0]

    def to_turn_records(self) -> list[dict]:
        records: dict[int, dict] = {}
        for ev in self.final.events:
            rec = records.setdefault(ev["turn"], {"turn": ev["turn"], "actions": []})
            body = {k: v for k, v in ev.items() if k != "turn"}
            body["rule"] = self.rules_fired[ev["turn"] - 1].get(ev["agent"], "")
            rec["actions"].append(body)
        return [records[t] for t in sorted(records)]


def _snapshot_layout(state: GridState) -> dict:
    return {
        "cells": {f"{x},{y}": dict(stock) for (x, y), stock in
                  sorted(state.cells.items()) if stock},
        "agents": [{"id": a.id, "pos": [a.x, a.y]} for a in state.agents],
    }


def run_episode(blue: GridPolicy, red: GridPolicy, config: GridConfig, seed: int,
                info_condition: str = "full") -> GridTrajectory:
    """Plays up to config.turns turns; stops early only if every agent dies.

    info_condition tags the trajectory for downstream log filtering; runtime
    observations are identical under every condition.
    """
    if info_condition not in ("full", "asymmetric", "own_team"):
        raise GridError(f"unknown info condition {info_condition!r}")
    state = initial_state(config, seed)
    layout = _snapshot_layout(state)
    rules_fired: list[dict[int, str]] = []
    for turn in range(1, config.turns + 1):
        living = state.living()
        if not living:
            break
        env_rng = derived_rng(seed, "env", turn)
        actions: dict[int, GridAction] = {}
        fired: dict[int, str] = {}
        for agent in living:
            obs = GridObservation(state, agent)
            policy = blue if agent.faction is Faction.BLUE else red
            if isinstance(policy, Constitution):
                decision = decide(policy, obs, derived_rng(seed, "decide", turn, agent.id))
                actions[agent.id] = resolve_action(state, obs, decision.action, env_rng)
                fired[agent.id] = decision.rule
            else:
                actions[agent.id] = policy(obs, derived_rng(seed, "decide", turn, agent.id))
                fired[agent.id] = "controller"
        step_turn(state, actions, env_rng)
        rules_fired.append(fired)
    return GridTrajectory(config, seed, info_condition, state, layout, rules_fired)


def grid_metrics(traj: GridTrajectory, faction: Faction) -> tuple[float, float, float]:
    """(progress, viability, friendly fire) for one faction."""
    state = traj.final
    cfg = traj.config
    progress = state.faction_deposited_total(faction) / cfg.required_total()
    viability = len(state.living(faction)) / cfg.agents_per_faction
    agent_turns, _, within = state.counters[faction]
    friendly_fire = min(1.0, within / agent_turns) if agent_turns else 0.0
    return min(1.0, progress), viability, friendly_fire
