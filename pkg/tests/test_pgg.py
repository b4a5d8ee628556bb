"""Public goods game: wealth accounting, punishment clamps, metrics, determinism."""

from __future__ import annotations

import random

import pytest

from constarena.dsl import ActExpr, parse
from constarena.envs import Faction
from constarena.envs.pgg import (
    PggConfig,
    PggError,
    PggObservation,
    PggState,
    PggTrajectory,
    pgg_metrics,
    run_episode,
    step_round,
)
from constarena.scoring import stability_score

CONTRIBUTE_ALL = parse("CONSTITUTION all_in\nRULE 1 r: WHEN ALWAYS DO contribute(1.0)\n")
REST_ONLY = parse("CONSTITUTION idle\nRULE 1 r: WHEN ALWAYS DO rest\n")


def _act(name: str, *args) -> ActExpr:
    return ActExpr(name, tuple(args))


def _random_actions(cfg: PggConfig, rng: random.Random) -> list[ActExpr]:
    actions = []
    for _ in range(cfg.n_agents):
        roll = rng.random()
        if roll < 0.45:
            actions.append(_act("contribute", round(rng.random(), 3)))
        elif roll < 0.70:
            selector = rng.choice(("lowest_contributor", "highest_contributor",
                                   "random_other"))
            actions.append(_act("punish", selector, round(rng.uniform(0.5, 40.0), 2)))
        elif roll < 0.85:
            actions.append(_act("broadcast", "tok"))
        else:
            actions.append(_act("rest"))
    return actions


# ---------------------------------------------------------------------------
# config and basic stepping
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    {"n_agents": 5},
    {"n_agents": 0},
    {"multiplier": 0.0},
    {"endowment": -1.0},
    {"progress_normalization": "bogus"},
])
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        PggConfig(**kwargs)


def test_faction_split():
    cfg = PggConfig()
    assert [cfg.faction_of(i) for i in range(6)] == [Faction.BLUE] * 3 + [Faction.RED] * 3
    assert list(cfg.faction_members(Faction.RED)) == [3, 4, 5]


def test_step_requires_full_action_vector():
    state = PggState.initial(PggConfig())
    with pytest.raises(PggError):
        step_round(state, [_act("rest")] * 3)


def test_bad_contribute_fraction_rejected():
    state = PggState.initial(PggConfig())
    with pytest.raises(PggError):
        step_round(state, [_act("contribute", 1.5)] + [_act("rest")] * 5)


# ---------------------------------------------------------------------------
# wealth accounting
# ---------------------------------------------------------------------------

def test_wealth_law_random_rounds():
    rng = random.Random(777)
    cfg = PggConfig()
    for _ in range(500):
        state = PggState.initial(cfg)
        state.wallets = [rng.uniform(0.0, 200.0) for _ in range(cfg.n_agents)]
        # Half the rounds come with history so ranking selectors resolve.
        if rng.random() < 0.5:
            state.contrib_frac.append([round(rng.random(), 2)
                                       for _ in range(cfg.n_agents)])
            state.contrib_abs.append([0.0] * cfg.n_agents)
            state.contributed.append([True] * cfg.n_agents)
            state.wallet_at_start.append(list(state.wallets))
            state.pools.append(0.0)
            state.round = 1
        before = sum(state.wallets)
        round_no = state.round + 1
        step_round(state, _random_actions(cfg, rng), random.Random(rng.random()))
        pool = state.pools[-1]
        deadweight = sum(e.cost + e.impact
                         for e in state.punishments if e.round == round_no)
        expect = (cfg.multiplier - 1.0) * pool - deadweight
        assert sum(state.wallets) - before == pytest.approx(expect, abs=1e-9)
        assert all(w >= 0.0 for w in state.wallets)


def test_all_cooperate_compounding():
    cfg = PggConfig()
    traj = run_episode(CONTRIBUTE_ALL, CONTRIBUTE_ALL, cfg, seed=1)
    total = sum(traj.final.wallets)
    assert total == pytest.approx(600.0 * 1.5 ** 20, rel=1e-9)
    # Equal split keeps every wallet identical round by round.
    assert traj.final.wallets == pytest.approx([100.0 * 1.5 ** 20] * 6, rel=1e-9)


def test_rest_pair_leaves_endowment_untouched():
    traj = run_episode(REST_ONLY, REST_ONLY, PggConfig(), seed=3)
    assert traj.final.wallets == [100.0] * 6
    assert traj.final.pools == [0.0] * 20


def test_defection_dominates_each_multiplier():
    for m in (1.2, 1.5, 2.0, 3.0):
        cfg = PggConfig(multiplier=m)
        assert m / cfg.n_agents < 1.0
        state = PggState.initial(cfg)
        actions = [_act("contribute", 1.0)] * 5 + [_act("rest")]
        step_round(state, actions)
        cooperator_delta = state.wallets[0] - 100.0
        defector_delta = state.wallets[5] - 100.0
        assert defector_delta > cooperator_delta


# ---------------------------------------------------------------------------
# punishment mechanics
# ---------------------------------------------------------------------------

def _one_punish_round(wallets, punisher, target_selector, units, history_row):
    cfg = PggConfig()
    state = PggState.initial(cfg)
    state.wallets = list(wallets)
    state.contrib_frac.append(list(history_row))
    state.contrib_abs.append([0.0] * cfg.n_agents)
    state.contributed.append([True] * cfg.n_agents)
    state.wallet_at_start.append(list(wallets))
    state.pools.append(0.0)
    state.round = 1
    actions = [_act("rest")] * cfg.n_agents
    actions[punisher] = _act("punish", target_selector, units)
    step_round(state, actions, random.Random(9))
    return state


def test_punish_cost_clamped_by_punisher_wallet():
    wallets = [1.5, 100, 100, 100, 100, 100]
    state = _one_punish_round(wallets, 0, "lowest_contributor", 1000.0,
                              [0.9, 0.0, 0.5, 0.5, 0.5, 0.5])
    event = state.punishments[-1]
    assert event.target == 1
    assert event.effective == pytest.approx(1.5 / 0.3)
    assert event.cost == pytest.approx(1.5)
    assert state.wallets[0] == pytest.approx(0.0)
    assert event.impact == pytest.approx(5.0)  # 1.0 * effective, target can pay
    assert state.wallets[1] == pytest.approx(95.0)


def test_punish_impact_clamped_by_target_wallet():
    wallets = [100, 2.0, 100, 100, 100, 100]
    state = _one_punish_round(wallets, 0, "lowest_contributor", 10.0,
                              [0.9, 0.0, 0.5, 0.5, 0.5, 0.5])
    event = state.punishments[-1]
    assert event.effective == pytest.approx(10.0)
    assert event.cost == pytest.approx(3.0)  # full cost even though impact clips
    assert event.impact == pytest.approx(2.0)
    assert state.wallets[1] == 0.0


def test_selector_ties_break_to_lowest_id():
    state = _one_punish_round([100.0] * 6, 5, "lowest_contributor", 1.0,
                              [0.2, 0.2, 0.5, 0.5, 0.5, 0.0])
    assert state.punishments[-1].target == 0
    state = _one_punish_round([100.0] * 6, 5, "highest_contributor", 1.0,
                              [0.5, 0.5, 0.2, 0.2, 0.2, 0.9])
    assert state.punishments[-1].target == 0


def test_ranking_selectors_skip_on_first_round():
    cfg = PggConfig()
    state = PggState.initial(cfg)
    actions = [_act("punish", "lowest_contributor", 5.0)] + [_act("rest")] * 5
    step_round(state, actions)
    assert state.punishments == []
    assert state.wallets == [100.0] * 6


def test_random_other_selector_uses_rng_and_excludes_self():
    cfg = PggConfig()
    targets = set()
    for seed in range(30):
        state = PggState.initial(cfg)
        actions = [_act("punish", "random_other", 2.0)] + [_act("rest")] * 5
        step_round(state, actions, random.Random(seed))
        event = state.punishments[-1]
        assert event.punisher == 0
        assert event.target != 0
        targets.add(event.target)
    assert len(targets) > 1


def test_sequential_punishment_in_agent_id_order():
    cfg = PggConfig()
    state = PggState.initial(cfg)
    state.wallets = [100, 4.0, 100, 100, 100, 100]
    state.contrib_frac.append([0.5, 0.0, 0.5, 0.5, 0.5, 0.5])
    state.contrib_abs.append([0.0] * 6)
    state.contributed.append([True] * 6)
    state.wallet_at_start.append(list(state.wallets))
    state.pools.append(0.0)
    state.round = 1
    actions = [_act("punish", "lowest_contributor", 3.0),
               _act("rest"),
               _act("punish", "lowest_contributor", 3.0),
               _act("rest"), _act("rest"), _act("rest")]
    step_round(state, actions, random.Random(1))
    first, second = state.punishments
    assert (first.punisher, second.punisher) == (0, 2)
    # Agent 0 lands 3.0 impact; agent 2 then hits the 1.0 left in the wallet.
    assert first.impact == pytest.approx(3.0)
    assert second.impact == pytest.approx(1.0)
    assert state.wallets[1] == 0.0


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------

def test_observation_metrics_first_round_defaults():
    state = PggState.initial(PggConfig())
    obs = PggObservation(state, 0)
    assert obs.metric("round") == 1.0
    assert obs.metric("wallet") == 100.0
    assert obs.metric("group_avg_contrib") == 0.0
    assert obs.metric("my_last_contrib") == 0.0
    assert obs.metric("contrib_of_lowest") == 0.0
    with pytest.raises(KeyError):
        obs.metric("no_such_metric")


def test_observation_metrics_track_history():
    cfg = PggConfig()
    state = PggState.initial(cfg)
    fracs = (0.6, 0.0, 0.3, 0.1, 0.5, 0.2)
    step_round(state, [_act("contribute", f) for f in fracs])
    obs = PggObservation(state, 0)
    assert obs.metric("round") == 2.0
    assert obs.metric("group_avg_contrib") == pytest.approx(sum(fracs) / 6)
    assert obs.metric("my_last_contrib") == pytest.approx(0.6)
    assert obs.metric("contrib_of_lowest") == 0.0


def test_was_punished_only_reflects_previous_round():
    state = _one_punish_round([100.0] * 6, 0, "lowest_contributor", 5.0,
                              [0.9, 0.0, 0.5, 0.5, 0.5, 0.5])
    assert PggObservation(state, 1).predicate("was_punished_last_round", ())
    assert not PggObservation(state, 2).predicate("was_punished_last_round", ())
    # One more quiet round and the flag clears.
    step_round(state, [_act("rest")] * 6)
    assert not PggObservation(state, 1).predicate("was_punished_last_round", ())


def test_others_contrib_high_excludes_self_and_uses_gte():
    cfg = PggConfig()
    state = PggState.initial(cfg)
    step_round(state, [_act("contribute", f)
                       for f in (0.0, 0.5, 0.5, 0.5, 0.5, 0.5)])
    obs = PggObservation(state, 0)
    assert obs.predicate("others_contrib_high", (0.5,))
    assert not obs.predicate("others_contrib_high", (0.51,))
    # Agent 1's view includes agent 0's zero, dragging the mean below 0.5.
    assert not PggObservation(state, 1).predicate("others_contrib_high", (0.5,))


def test_freerider_streak_spans_rounds_and_counts_rest_as_zero():
    cfg = PggConfig()
    state = PggState.initial(cfg)
    low = [_act("rest")] + [_act("contribute", 0.5)] * 5
    step_round(state, list(low))
    obs = PggObservation(state, 1)
    assert not obs.predicate("has_freerider_streak", (0.1, 2))  # only 1 round yet
    step_round(state, list(low))
    assert PggObservation(state, 1).predicate("has_freerider_streak", (0.1, 2))
    # The streaky agent does not accuse itself.
    assert not PggObservation(state, 0).predicate("has_freerider_streak", (0.1, 2))
    # A single generous round breaks the streak.
    step_round(state, [_act("contribute", 0.5)] * 6)
    assert not PggObservation(state, 1).predicate("has_freerider_streak", (0.1, 2))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def test_metrics_hand_oracle_three_rounds_four_agents():
    cfg = PggConfig(n_agents=4, rounds=3)
    state = PggState.initial(cfg)
    step_round(state, [_act("contribute", 0.5), _act("contribute", 0.0),
                       _act("rest"), _act("contribute", 0.2)])
    step_round(state, [_act("punish", "lowest_contributor", 10.0),
                       _act("contribute", 1.0), _act("broadcast", "x"),
                       _act("rest")])
    step_round(state, [_act("rest")] * 4)
    traj = PggTrajectory(cfg, seed=0, final=state, decisions=[], actions=[])

    # Hand-computed: pools 70 and 126.25; wallet-at-start sums 400, 435, 485.125.
    p, v, c_blue = pgg_metrics(traj, Faction.BLUE)
    assert p == pytest.approx(196.25 / 1320.125)
    assert v == 1.0
    assert c_blue == pytest.approx(1 / 6)  # agent 1's round-1 contribute(0.0)
    _, _, c_red = pgg_metrics(traj, Faction.RED)
    assert c_red == 0.0
    event = state.punishments[0]
    assert (event.target, event.cost, event.impact) == (1, pytest.approx(3.0),
                                                        pytest.approx(10.0))


def test_resting_faction_is_not_a_freerider():
    traj = run_episode(REST_ONLY, REST_ONLY, PggConfig(), seed=5)
    for faction in (Faction.BLUE, Faction.RED):
        p, v, c = pgg_metrics(traj, faction)
        assert (p, v, c) == (0.0, 1.0, 0.0)
        assert stability_score(p, v, c) == pytest.approx(0.3)


def test_zero_fraction_contributor_is_a_freerider():
    zero = parse("CONSTITUTION z\nRULE 1 r: WHEN ALWAYS DO contribute(0.0)\n")
    traj = run_episode(CONTRIBUTE_ALL, zero, PggConfig(), seed=5)
    _, _, c_red = pgg_metrics(traj, Faction.RED)
    assert c_red == 1.0
    _, _, c_blue = pgg_metrics(traj, Faction.BLUE)
    assert c_blue == 0.0


def test_full_cooperation_progress_is_one():
    traj = run_episode(CONTRIBUTE_ALL, CONTRIBUTE_ALL, PggConfig(), seed=2)
    p, _, c = pgg_metrics(traj, Faction.BLUE)
    assert p == pytest.approx(1.0)
    assert c == 0.0


def test_endowment_normalization_mode():
    cfg = PggConfig(progress_normalization="endowment")
    traj = run_episode(CONTRIBUTE_ALL, CONTRIBUTE_ALL, cfg, seed=2)
    p, _, _ = pgg_metrics(traj, Faction.BLUE)
    # Compounding pushes contributions far past the one-shot endowment; clamped.
    assert p == 1.0


def test_aggression_counts_punish_events_per_faction():
    blue = parse("CONSTITUTION b\n"
                 "RULE 1 r: WHEN round > 1 DO punish(lowest_contributor, 1)\n"
                 "RULE 2 s: WHEN ALWAYS DO contribute(0.5)\n")
    traj = run_episode(blue, REST_ONLY, PggConfig(), seed=7)
    assert traj.aggression_count(Faction.BLUE) == 3 * 19
    assert traj.aggression_count(Faction.RED) == 0
    assert traj.agent_turns(Faction.BLUE) == 60


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------

def test_episode_determinism():
    blue = parse("CONSTITUTION b\n"
                 "RULE 1 r: WHEN group_avg_contrib < 0.4 DO punish(random_other, 2)\n"
                 "RULE 2 s: WHEN ALWAYS DO contribute(0.6)\n")
    red = parse("CONSTITUTION r\nRULE 1 r: WHEN ALWAYS DO contribute(0.1)\n")
    a = run_episode(blue, red, PggConfig(), seed=42)
    b = run_episode(blue, red, PggConfig(), seed=42)
    assert a.final.wallets == b.final.wallets
    assert a.to_round_records() == b.to_round_records()
    c = run_episode(blue, red, PggConfig(), seed=43)
    assert a.final.wallets != c.final.wallets


def test_round_records_shape():
    traj = run_episode(CONTRIBUTE_ALL, REST_ONLY, PggConfig(rounds=2), seed=1)
    records = traj.to_round_records()
    assert len(records) == 2
    first = records[0]
    assert first["round"] == 1
    assert first["actions"][0] == "contribute(1)"
    assert first["actions"][5] == "rest"
    assert first["pool"] == pytest.approx(300.0)
