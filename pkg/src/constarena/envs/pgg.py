"""Public goods game: N agents, R rounds, multiplied shared pool, costly punishment.

Each round every agent simultaneously picks an action from its constitution.
Contributions are fractions of the agent's current wallet; the pool is
multiplied by m and split equally among all N agents. Punishment costs the
punisher 0.3 per unit and removes 1.0 per unit from the target, both clamped
so wallets never go negative. Broadcasts are inert tokens.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..dsl import ActExpr, Constitution, format_action
from ..policy import decide
from ..rng import derived_rng
from .identity import Faction


class PggError(Exception):
    pass


@dataclass(frozen=True)
class PggConfig:
    n_agents: int = 6  # first half Blue, second half Red
    rounds: int = 20
    multiplier: float = 1.5
    endowment: float = 100.0
    punish_cost_ratio: float = 0.3
    punish_impact_ratio: float = 1.0
    freeride_threshold: float = 0.10
    # "available" divides total contributions by total wallet-at-round-start;
    # "endowment" divides by endowment * n_agents * rounds.
    progress_normalization: str = "available"

    def __post_init__(self):
        if self.n_agents < 2 or self.n_agents % 2:
            raise ValueError("n_agents must be an even number >= 2")
        if self.multiplier <= 0 or self.endowment <= 0:
            raise ValueError("multiplier and endowment must be positive")
        if self.progress_normalization not in ("available", "endowment"):
            raise ValueError(f"unknown normalization {self.progress_normalization!r}")

    def faction_of(self, agent: int) -> Faction:
        return Faction.BLUE if agent < self.n_agents // 2 else Faction.RED

    def faction_members(self, faction: Faction) -> range:
        half = self.n_agents // 2
        return range(0, half) if faction is Faction.BLUE else range(half, self.n_agents)


@dataclass(frozen=True)
class PunishEvent:
    round: int
    punisher: int
    target: int
    requested: float
    effective: float  # units actually funded by the punisher's wallet
    cost: float
    impact: float  # loss actually applied to the target


@dataclass
class PggState:
    config: PggConfig
    round: int = 0  # completed rounds
    wallets: list[float] = field(default_factory=list)
    wallet_at_start: list[list[float]] = field(default_factory=list)  # per round
    contrib_frac: list[list[float]] = field(default_factory=list)
    contrib_abs: list[list[float]] = field(default_factory=list)
    contributed: list[list[bool]] = field(default_factory=list)  # action was contribute
    pools: list[float] = field(default_factory=list)
    punishments: list[PunishEvent] = field(default_factory=list)
    broadcasts: list[tuple[int, int, str]] = field(default_factory=list)  # round, agent, token

    @classmethod
    def initial(cls, config: PggConfig) -> "PggState":
        return cls(config=config, wallets=[config.endowment] * config.n_agents)


def _contribution_fraction(action: ActExpr) -> float:
    if action.name == "contribute":
        frac = action.args[0]
        if isinstance(frac, str) or not (0.0 <= frac <= 1.0):
            raise PggError(f"contribute fraction {frac!r} out of [0, 1]")
        return float(frac)
    return 0.0


def _resolve_punish_target(state: PggState, punisher: int, selector: str,
                           rng: random.Random) -> int | None:
    n = state.config.n_agents
    others = [j for j in range(n) if j != punisher]
    if selector == "random_other":
        return rng.choice(others)
    if not state.contrib_frac:  # no history yet; nothing to rank
        return None
    last = state.contrib_frac[-1]
    if selector == "lowest_contributor":
        return min(others, key=lambda j: (last[j], j))
    if selector == "highest_contributor":
        return min(others, key=lambda j: (-last[j], j))
    raise PggError(f"unknown punish selector {selector!r}")


def step_round(state: PggState, actions: list[ActExpr],
               rng: random.Random | None = None) -> PggState:
    """Advances one round in place and returns the state.

    Effect order: contributions out, pool share in, punishments, broadcasts.
    Punishments apply sequentially in punisher-id order; both the cost and
    the impact are limited by the wallets involved, and the effective values
    are what the ledger records.
    """
    cfg = state.config
    if len(actions) != cfg.n_agents:
        raise PggError(f"need {cfg.n_agents} actions, got {len(actions)}")
    rng = rng if rng is not None else random.Random(0)
    rnd = state.round + 1
    state.wallet_at_start.append(list(state.wallets))

    fracs = [_contribution_fraction(a) for a in actions]
    absolutes = [f * w for f, w in zip(fracs, state.wallets)]
    for i, amount in enumerate(absolutes):
        state.wallets[i] -= amount
    pool = sum(absolutes)
    share = cfg.multiplier * pool / cfg.n_agents
    for i in range(cfg.n_agents):
        state.wallets[i] += share

    for i, action in enumerate(actions):
        if action.name != "punish":
            continue
        selector, units = action.args
        if isinstance(units, str) or units <= 0:
            raise PggError(f"punish units {units!r} must be positive")
        target = _resolve_punish_target(state, i, str(selector), rng)
        if target is None:
            continue
        effective = min(float(units), state.wallets[i] / cfg.punish_cost_ratio)
        cost = cfg.punish_cost_ratio * effective
        impact = min(cfg.punish_impact_ratio * effective, state.wallets[target])
        state.wallets[i] = max(0.0, state.wallets[i] - cost)
        state.wallets[target] = max(0.0, state.wallets[target] - impact)
        state.punishments.append(
            PunishEvent(rnd, i, target, float(units), effective, cost, impact))

    for i, action in enumerate(actions):
        if action.name == "broadcast":
            state.broadcasts.append((rnd, i, str(action.args[0])))

    state.contrib_frac.append(fracs)
    state.contrib_abs.append(absolutes)
    state.contributed.append([a.name == "contribute" for a in actions])
    state.pools.append(pool)
    state.round = rnd
    return state


class PggObservation:
    """Read-only per-agent view of game history; answers the pgg registry."""

    def __init__(self, state: PggState, agent: int):
        self._state = state
        self._agent = agent

    def metric(self, name: str) -> float:
        state, i = self._state, self._agent
        history = state.contrib_frac
        if name == "round":
            return float(state.round + 1)
        if name == "wallet":
            return state.wallets[i]
        if name == "group_avg_contrib":
            if not history:
                return 0.0
            return sum(history[-1]) / len(history[-1])
        if name == "my_last_contrib":
            return history[-1][i] if history else 0.0
        if name == "contrib_of_lowest":
            return min(history[-1]) if history else 0.0
        raise KeyError(name)

    def predicate(self, name: str, args: tuple[float | str, ...]) -> bool:
        state, i = self._state, self._agent
        history = state.contrib_frac
        if name == "was_punished_last_round":
            return any(e.round == state.round and e.target == i and e.effective > 0
                       for e in state.punishments)
        if name == "others_contrib_high":
            threshold = float(args[0])
            if not history:
                return False
            others = [f for j, f in enumerate(history[-1]) if j != i]
            return sum(others) / len(others) >= threshold
        if name == "has_freerider_streak":
            threshold, span = float(args[0]), int(args[1])
            if len(history) < span:
                return False
            window = history[-span:]
            return any(all(row[j] < threshold for row in window)
                       for j in range(state.config.n_agents) if j != i)
        raise KeyError(name)


@dataclass
class PggTrajectory:
    config: PggConfig
    seed: int
    final: PggState
    decisions: list[list[str]]  # firing rule name per agent per round
    actions: list[list[ActExpr]]

    @property
    def pools(self) -> list[float]:
        return self.final.pools

    def aggression_count(self, faction: Faction) -> int:
        members = set(self.config.faction_members(faction))
        return sum(1 for e in self.final.punishments if e.punisher in members)

    def agent_turns(self, faction: Faction) -> int:
        return len(self.config.faction_members(faction)) * self.config.rounds

    def to_round_records(self) -> list[dict]:
        """One JSON-ready record per round, for export and mutation context."""
        state = self.final
        records = []
        for r in range(state.round):
            records.append({
                "round": r + 1,
                "wallet_start": state.wallet_at_start[r],
                "contrib_frac": state.contrib_frac[r],
                "contrib_abs": state.contrib_abs[r],
                "pool": state.pools[r],
                "rules": self.decisions[r],
                "actions": [format_action(a) for a in self.actions[r]],
                "punishments": [
                    {"punisher": e.punisher, "target": e.target,
                     "effective": e.effective, "impact": e.impact}
                    for e in state.punishments if e.round == r + 1],
                "broadcasts": [{"agent": a, "token": t}
                               for rr, a, t in state.broadcasts if rr == r + 1],
            })
        return records


def run_episode(blue: Constitution, red: Constitution, config: PggConfig,
                seed: int) -> PggTrajectory:
    """Plays a full game; deterministic given (constitutions, config, seed)."""
    state = PggState.initial(config)
    decisions: list[list[str]] = []
    actions_log: list[list[ActExpr]] = []
    for r in range(1, config.rounds + 1):
        round_actions: list[ActExpr] = []
        round_rules: list[str] = []
        for i in range(config.n_agents):
            ruleset = blue if config.faction_of(i) is Faction.BLUE else red
            picked = decide(ruleset, PggObservation(state, i),
                            derived_rng(seed, "decide", r, i))
            round_actions.append(picked.action)
            round_rules.append(picked.rule)
        step_round(state, round_actions, derived_rng(seed, "env", r))
        decisions.append(round_rules)
        actions_log.append(round_actions)
    return PggTrajectory(config, seed, state, decisions, actions_log)


def pgg_metrics(traj: PggTrajectory, faction: Faction) -> tuple[float, float, float]:
    """(progress, viability, friendly fire) for one faction.

    Progress is pool utilization shared by both factions; viability is always
    1.0 (nobody dies here); friendly fire is the faction's free-riding rate.
    """
    cfg = traj.config
    state = traj.final
    contributed = sum(sum(row) for row in state.contrib_abs)
    if cfg.progress_normalization == "available":
        available = sum(sum(row) for row in state.wallet_at_start)
        progress = contributed / available if available > 0 else 0.0
    else:
        available = cfg.endowment * cfg.n_agents * cfg.rounds
        progress = contributed / available
    progress = min(1.0, max(0.0, progress))

    # Free-riding means actively contributing below threshold. Rest, punish,
    # and broadcast rounds are exempt: a resting pair scores S = 0.3, not 0.1.
    members = list(cfg.faction_members(faction))
    freeride_rounds = sum(
        1 for r in range(state.round) for j in members
        if state.contributed[r][j] and state.contrib_frac[r][j] < cfg.freeride_threshold)
    friendly_fire = freeride_rounds / (len(members) * state.round)
    return progress, 1.0, friendly_fire
