"""Game environments and a thin dispatch layer over them.

An EnvSpec names an environment kind plus its config and is the unit the
search/coevolution layers pass around; they never branch on environment
details themselves.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..dsl import Registry
from ..registries import get_registry
from .grid import GridConfig, GridPolicy, GridTrajectory, grid_metrics
from .grid import run_episode as run_grid_episode
from .identity import Faction
from .pgg import PggConfig, PggTrajectory, pgg_metrics
from .pgg import run_episode as run_pgg_episode

INFO_CONDITIONS = ("full", "asymmetric", "own_team")

Trajectory = PggTrajectory | GridTrajectory


@dataclass(frozen=True)
class EnvSpec:
    kind: str  # pgg | grid
    pgg: PggConfig | None = None
    grid: GridConfig | None = None
    info_condition: str = "full"

    def __post_init__(self):
        if self.kind not in ("pgg", "grid"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.info_condition not in INFO_CONDITIONS:
            raise ValueError(f"unknown info condition {self.info_condition!r}")

    @classmethod
    def make(cls, kind: str, info_condition: str = "full", **config) -> "EnvSpec":
        if kind == "pgg":
            return cls("pgg", pgg=PggConfig(**config), info_condition=info_condition)
        return cls("grid", grid=GridConfig(**config), info_condition=info_condition)

    @property
    def config(self) -> PggConfig | GridConfig:
        cfg = self.pgg if self.kind == "pgg" else self.grid
        assert cfg is not None
        return cfg

    def to_dict(self) -> dict:
        payload = asdict(self.config)
        if self.kind == "grid":
            payload["project_requirement"] = [list(p) for p in
                                              payload["project_requirement"]]
        return {"kind": self.kind, "info_condition": self.info_condition,
                "config": payload}

    @classmethod
    def from_dict(cls, data: dict) -> "EnvSpec":
        config = dict(data.get("config", {}))
        if data["kind"] == "grid" and "project_requirement" in config:
            config["project_requirement"] = tuple(
                (kind, int(amount)) for kind, amount in config["project_requirement"])
        return cls.make(data["kind"], data.get("info_condition", "full"), **config)


def registry_for(spec: EnvSpec) -> Registry:
    return get_registry(spec.kind)


def run(spec: EnvSpec, blue: GridPolicy, red: GridPolicy, seed: int) -> Trajectory:
    """Runs one full episode of the named environment; deterministic given the seed."""
    if spec.kind == "pgg":
        assert spec.pgg is not None
        return run_pgg_episode(blue, red, spec.pgg, seed)
    assert spec.grid is not None
    return run_grid_episode(blue, red, spec.grid, seed,
                            info_condition=spec.info_condition)


def metrics(traj: Trajectory, faction: Faction) -> tuple[float, float, float]:
    """(progress, viability, friendly fire) components for one faction."""
    if isinstance(traj, PggTrajectory):
        return pgg_metrics(traj, faction)
    return grid_metrics(traj, faction)


def aggression_rate(traj: Trajectory, faction: Faction) -> float:
    """Aggressive actions per faction agent-turn; the behavior descriptor axis."""
    turns = traj.agent_turns(faction)
    if turns == 0:
        return 0.0
    return min(1.0, traj.aggression_count(faction) / turns)
