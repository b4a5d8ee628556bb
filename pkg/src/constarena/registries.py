"""Vocabularies the two environments expose to constitutions.

Each registry lists the metrics a condition may compare, the predicates it may
call, and the actions a rule may take, together with argument domains used by
the validator and by mutation operators that need to clamp numeric edits.
"""

from __future__ import annotations

from .dsl import ActionSig, MetricSig, ParamSpec, PredicateSig, Registry

FRACTION = ParamSpec("fraction")
AMOUNT = ParamSpec("amount")
COUNT = ParamSpec("count")
TOKEN = ParamSpec("token")


def _choice(*options: str) -> ParamSpec:
    return ParamSpec("choice", tuple(options))


PGG_TARGET_SELECTORS = ("lowest_contributor", "highest_contributor", "random_other")

PGG_REGISTRY = Registry(
    environment="pgg",
    metrics={
        "round": MetricSig("count"),
        "wallet": MetricSig("number"),
        "group_avg_contrib": MetricSig("fraction"),
        "my_last_contrib": MetricSig("fraction"),
        "contrib_of_lowest": MetricSig("fraction"),
    },
    predicates={
        "has_freerider_streak": PredicateSig((FRACTION, COUNT)),
        "was_punished_last_round": PredicateSig(),
        "others_contrib_high": PredicateSig((FRACTION,)),
    },
    actions={
        "contribute": ActionSig((FRACTION,)),
        "punish": ActionSig((_choice(*PGG_TARGET_SELECTORS), AMOUNT)),
        "broadcast": ActionSig((TOKEN,)),
        "rest": ActionSig(),
    },
    rule_templates=(
        "WHEN ALWAYS DO contribute(0.5)",
        "WHEN group_avg_contrib < 0.25 DO contribute(0.1)",
        "WHEN has_freerider_streak(0.1, 2) DO punish(lowest_contributor, 5)",
        "WHEN was_punished_last_round DO contribute(0.5)",
        "WHEN others_contrib_high(0.5) DO contribute(0.6)",
        "WHEN wallet < 20 DO rest",
    ),
)

GRID_RESOURCE_KINDS = ("wood", "stone", "gems")
GRID_CARRY_CHOICES = GRID_RESOURCE_KINDS + ("any_needed", "any")
GRID_ADJACENT_CHOICES = ("any_other", "non_ally_heuristic", "ally_heuristic")
GRID_MOVE_GOALS = ("nearest_resource", "deficit_resource", "nearest_non_ally", "nearest_ally")
GRID_TARGET_SELECTORS = ("adjacent_non_ally", "adjacent_ally", "random_adjacent")
GRID_GIVE_CHOICES = GRID_RESOURCE_KINDS + ("any_carried",)

GRID_REGISTRY = Registry(
    environment="grid",
    metrics={
        "turn": MetricSig("count"),
        "cell_resources_here": MetricSig("count"),
        "own_faction_progress": MetricSig("fraction"),
    },
    predicates={
        "carrying": PredicateSig((_choice(*GRID_CARRY_CHOICES),)),
        "team_deficit_largest": PredicateSig((_choice(*GRID_RESOURCE_KINDS),)),
        "adjacent_to": PredicateSig((_choice(*GRID_ADJACENT_CHOICES),)),
        "was_attacked_recently": PredicateSig(),
        "ally_nearby": PredicateSig(),
    },
    actions={
        "gather": ActionSig(),
        "deposit": ActionSig(),
        "move_toward": ActionSig((_choice(*GRID_MOVE_GOALS),)),
        "move_random": ActionSig(),
        "communicate": ActionSig((TOKEN,)),
        "attack": ActionSig((_choice(*GRID_TARGET_SELECTORS),)),
        "steal": ActionSig((_choice(*GRID_TARGET_SELECTORS),)),
        "give": ActionSig((_choice(*GRID_TARGET_SELECTORS), _choice(*GRID_GIVE_CHOICES))),
        "rest": ActionSig(),
    },
    rule_templates=(
        "WHEN carrying(any_needed) DO deposit",
        "WHEN cell_resources_here >= 1 DO gather",
        "WHEN adjacent_to(non_ally_heuristic) DO attack(adjacent_non_ally)",
        "WHEN adjacent_to(non_ally_heuristic) DO steal(adjacent_non_ally)",
        "WHEN was_attacked_recently DO move_random",
        "WHEN ALWAYS DO move_toward(nearest_resource)",
    ),
)

REGISTRIES: dict[str, Registry] = {
    "pgg": PGG_REGISTRY,
    "grid": GRID_REGISTRY,
}


def get_registry(environment: str) -> Registry:
    try:
        return REGISTRIES[environment]
    except KeyError:
        raise KeyError(
            f"no registry for environment {environment!r}; "
            f"known: {sorted(REGISTRIES)}") from None
