"""Bundled starter constitutions.

Six hand-written constitutions cover both environments and all three faction
styles: cooperative builders, free-riders, zero-sum raiders, and pure
adversaries. They seed evolution runs and serve as fixed baselines.
"""

from __future__ import annotations

from importlib import resources

from ..dsl import Constitution, parse

SEED_NAMES = (
    "grid_blue_cstar",
    "grid_red_zerosum",
    "grid_red_pure_adversary",
    "pgg_blue_coop",
    "pgg_red_freerider",
    "pgg_red_pure_adversary",
)


def seed_text(name: str) -> str:
    if name not in SEED_NAMES:
        raise KeyError(f"unknown seed {name!r}; known: {SEED_NAMES}")
    return (resources.files(__package__) / f"{name}.const").read_text()


def load_seed(name: str) -> Constitution:
    return parse(seed_text(name))
