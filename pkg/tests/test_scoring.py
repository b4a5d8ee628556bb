"""Composite score and fitness-mode algebra."""

from __future__ import annotations

import random

import pytest

from constarena.envs import Faction
from constarena.scoring import (
    ABSOLUTE,
    ADVANTAGE,
    CANONICAL_WEIGHTS,
    FITNESS_MODES,
    PURE_ADVERSARY,
    ScoreBreakdown,
    ScoreWeights,
    ScoringError,
    fitness,
    stability_score,
)


def test_score_extremes_exact():
    assert stability_score(1.0, 1.0, 0.0) == pytest.approx(0.8, abs=0)
    assert stability_score(0.0, 0.0, 1.0) == pytest.approx(-0.2, abs=0)


def test_score_weights():
    assert stability_score(1.0, 0.0, 0.0) == pytest.approx(0.5)
    assert stability_score(0.0, 1.0, 0.0) == pytest.approx(0.3)
    assert stability_score(0.0, 0.0, 0.5) == pytest.approx(-0.1)
    assert CANONICAL_WEIGHTS.is_canonical


def test_score_range_over_random_components():
    rng = random.Random(11)
    for _ in range(1000):
        s = stability_score(rng.random(), rng.random(), rng.random())
        assert -0.2 <= s <= 0.8


@pytest.mark.parametrize("p, v, c", [
    (1.1, 0.5, 0.0),
    (-0.01, 0.5, 0.0),
    (0.5, 2.0, 0.0),
    (0.5, 0.5, 1.5),
    (0.5, 0.5, -0.2),
])
def test_components_outside_unit_interval_rejected(p, v, c):
    with pytest.raises(ScoringError):
        stability_score(p, v, c)


def test_no_clamping_inside_range():
    # 0.5*0.9 + 0.3*0 - 0.2*1 = 0.25: intermediate values pass through untouched.
    assert stability_score(0.9, 0.0, 1.0) == pytest.approx(0.25)


def test_breakdown_carries_components():
    b = ScoreBreakdown.from_components(0.5, 1.0, 0.1)
    assert (b.progress, b.viability, b.friendly_fire) == (0.5, 1.0, 0.1)
    assert b.score == pytest.approx(stability_score(0.5, 1.0, 0.1))


def test_custom_weights():
    w = ScoreWeights(0.6, 0.4, 0.0)
    assert not w.is_canonical
    assert stability_score(0.5, 0.5, 1.0, w) == pytest.approx(0.5)


def test_fitness_modes_identities_random_pairs():
    rng = random.Random(313)
    for _ in range(1000):
        own = rng.uniform(-0.2, 0.8)
        opp = rng.uniform(-0.2, 0.8)
        assert fitness(own, opp, ABSOLUTE, Faction.BLUE) == own
        adv_ab = fitness(own, opp, ADVANTAGE, Faction.BLUE)
        adv_ba = fitness(opp, own, ADVANTAGE, Faction.RED)
        assert abs(adv_ab + adv_ba) <= 1e-12
        assert fitness(own, opp, PURE_ADVERSARY, Faction.RED) == 1.0 - opp


def test_pure_adversary_is_red_only():
    assert fitness(0.1, 0.5, PURE_ADVERSARY) == pytest.approx(0.5)
    with pytest.raises(ScoringError):
        fitness(0.1, 0.5, PURE_ADVERSARY, Faction.BLUE)


def test_unknown_mode_rejected():
    assert set(FITNESS_MODES) == {ABSOLUTE, ADVANTAGE, PURE_ADVERSARY}
    with pytest.raises(ScoringError):
        fitness(0.1, 0.5, "warlord")
