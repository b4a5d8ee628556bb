"""Alternating co-evolution loop with validated, resumable checkpoints.

Per generation: Blue evolves against the previous Red, then Red evolves
against the brand-new Blue, then the resulting pair is jointly re-evaluated
on the fixed seed schedule and the generation is checkpointed. Every
constitution is re-parsed and re-validated immediately before any checkpoint
write; a record that fails that gate is never persisted in any form.

All randomness derives from (master_seed, generation, role), so a resumed
run continues byte-identically without serialized RNG state.
"""

from __future__ import annotations

import json
import os
import random
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import envs
from .dsl import Constitution, ParseError, parse, serialize, validate
from .envs import EnvSpec, Faction
from .llm import LlmConfig, LlmMutator, filter_action_records, render_log_lines
from .rng import derive_seed
from .scoring import ADVANTAGE, FITNESS_MODES, PURE_ADVERSARY, fitness
from .search import (
    EvolveConfig,
    MapFn,
    Mutator,
    ScriptedMutator,
    evaluate,
    openevolve_step,
)

MODE_DESCRIPTIONS = {
    "absolute": "maximize your own faction's stability score",
    "advantage": "maximize your stability score minus the opponent's",
    "pure_adversary": "minimize the opponent faction's stability score",
}


class CoevolutionError(Exception):
    pass


class ResumeError(CoevolutionError):
    pass


@dataclass(frozen=True)
class RunConfig:
    env: EnvSpec
    generations: int = 30
    mode_blue: str = ADVANTAGE
    mode_red: str = ADVANTAGE
    evolve: EvolveConfig = EvolveConfig()
    mutator: str = "scripted"  # scripted | llm
    llm: LlmConfig | None = None
    blue_init: str = ""  # DSL text
    red_init: str = ""
    fixed_blue: bool = False
    master_seed: int = 0
    out_dir: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.generations < 1:
            raise CoevolutionError("generations must be >= 1")
        for mode in (self.mode_blue, self.mode_red):
            if mode not in FITNESS_MODES:
                raise CoevolutionError(f"unknown fitness mode {mode!r}")
        if self.mode_blue == PURE_ADVERSARY:
            raise CoevolutionError("pure_adversary is a Red-only fitness mode")
        if self.mutator not in ("scripted", "llm"):
            raise CoevolutionError(f"unknown mutator {self.mutator!r}")
        if self.mutator == "llm" and self.llm is None:
            raise CoevolutionError("llm mutator requires an LlmConfig")

    def to_dict(self) -> dict:
        data = {
            "env": self.env.to_dict(),
            "generations": self.generations,
            "mode_blue": self.mode_blue,
            "mode_red": self.mode_red,
            "evolve": vars(self.evolve).copy(),
            "mutator": self.mutator,
            "llm": vars(self.llm).copy() if self.llm else None,
            "blue_init": self.blue_init,
            "red_init": self.red_init,
            "fixed_blue": self.fixed_blue,
            "master_seed": self.master_seed,
            "out_dir": self.out_dir,
            "jobs": self.jobs,
        }
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        payload = dict(data)
        payload["env"] = EnvSpec.from_dict(payload["env"])
        if payload.get("evolve"):
            payload["evolve"] = EvolveConfig(**payload["evolve"])
        llm = payload.get("llm")
        payload["llm"] = LlmConfig(**llm) if llm else None
        return cls(**payload)


@dataclass
class GenerationRecord:
    g: int
    const_blue: str
    const_red: str
    s_blue: float
    s_red: float
    fitness_blue: float
    fitness_red: float
    rules_blue: int
    rules_red: int
    rejections: dict
    wall_time: float = 0.0  # kept out of the serialized record (see sidecar)

    def to_json_dict(self) -> dict:
        return {
            "g": self.g,
            "const_blue": self.const_blue,
            "const_red": self.const_red,
            "s_blue": self.s_blue,
            "s_red": self.s_red,
            "fitness_blue": self.fitness_blue,
            "fitness_red": self.fitness_red,
            "rules_blue": self.rules_blue,
            "rules_red": self.rules_red,
            "rejections": self.rejections,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "GenerationRecord":
        return cls(**data)


# ---------------------------------------------------------------------------
# Checkpoint store
# ---------------------------------------------------------------------------

def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _record_line(record: GenerationRecord) -> str:
    return json.dumps(record.to_json_dict(), sort_keys=True)


class CheckpointStore:
    """Run-directory layout: run.json, generations.jsonl, timings.jsonl,
    constitutions/gen_<g>_<faction>.const, archive/gen_<g>.json."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(os.path.join(out_dir, "constitutions"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "archive"), exist_ok=True)

    def path(self, *parts: str) -> str:
        return os.path.join(self.out_dir, *parts)

    def write_config(self, cfg: RunConfig):
        _atomic_write(self.path("run.json"),
                      json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")

    def write_generation(self, records: list[GenerationRecord],
                         archives: dict[str, dict], env_spec: EnvSpec):
        """Persists the latest record; gate first, then write atomically."""
        record = records[-1]
        registry = envs.registry_for(env_spec)
        for label, text in (("blue", record.const_blue), ("red", record.const_red)):
            try:
                constitution = parse(text)
            except ParseError as exc:
                raise CoevolutionError(
                    f"refusing to checkpoint unparsable {label} constitution "
                    f"at generation {record.g}: {exc}") from exc
            report = validate(constitution, registry)
            if not report.ok:
                raise CoevolutionError(
                    f"refusing to checkpoint invalid {label} constitution "
                    f"at generation {record.g}: {report.summary()}")

        g = record.g
        _atomic_write(self.path("constitutions", f"gen_{g}_blue.const"),
                      record.const_blue)
        _atomic_write(self.path("constitutions", f"gen_{g}_red.const"),
                      record.const_red)
        _atomic_write(self.path("archive", f"gen_{g}.json"),
                      json.dumps(archives, sort_keys=True) + "\n")
        _atomic_write(self.path("generations.jsonl"),
                      "".join(_record_line(r) + "\n" for r in records))
        timing_rows = "".join(
            json.dumps({"g": r.g, "wall_time": round(r.wall_time, 6)}) + "\n"
            for r in records)
        _atomic_write(self.path("timings.jsonl"), timing_rows)

    def load_records(self, env_spec: EnvSpec) -> list[GenerationRecord]:
        """Valid-prefix read: a corrupt or invalid tail is dropped and the
        file truncated back to the last good generation."""
        log_path = self.path("generations.jsonl")
        if not os.path.exists(log_path):
            raise ResumeError(f"no generation log at {log_path}")
        registry = envs.registry_for(env_spec)
        records: list[GenerationRecord] = []
        with open(log_path) as fh:
            lines = fh.readlines()
        kept = 0
        for line in lines:
            try:
                data = json.loads(line)
                record = GenerationRecord.from_json_dict(data)
                for text in (record.const_blue, record.const_red):
                    if not validate(parse(text), registry).ok:
                        raise ValueError("constitution failed validation")
                if record.g != kept + 1:
                    raise ValueError(f"generation gap at g={record.g}")
            except (ValueError, KeyError, TypeError, ParseError):
                break
            records.append(record)
            kept += 1
        if not records:
            raise ResumeError("generation log contains no valid records")
        if kept < len(lines):
            _atomic_write(log_path, "".join(_record_line(r) + "\n" for r in records))
        return records


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------

def _flat_action_records(traj) -> list[dict]:
    if hasattr(traj, "final") and hasattr(traj.final, "events"):  # grid
        return [{"t": ev["turn"], "agent": ev["agent"], "action": ev["action"],
                 "outcome": ev.get("outcome")} for ev in traj.final.events]
    out = []
    for r, actions in enumerate(traj.actions, start=1):  # pgg
        for agent, act in enumerate(actions):
            args = ", ".join(str(a) for a in act.args)
            out.append({"t": r, "agent": agent,
                        "action": f"{act.name}({args})" if args else act.name,
                        "outcome": None})
    return out


def _member_ids(env_spec: EnvSpec) -> tuple[frozenset[int], frozenset[int]]:
    if env_spec.kind == "pgg":
        half = env_spec.pgg.n_agents // 2
        return frozenset(range(half)), frozenset(range(half, env_spec.pgg.n_agents))
    n = env_spec.grid.agents_per_faction
    return frozenset(range(n)), frozenset(range(n, 2 * n))


@dataclass
class _LoopState:
    blue: Constitution
    red: Constitution
    records: list[GenerationRecord] = field(default_factory=list)
    last_joint_records: list[dict] = field(default_factory=list)


class Run:
    """Owns one co-evolution run; splits setup from the per-generation body
    so interrupted runs and tests can drive the loop directly."""

    def __init__(self, cfg: RunConfig,
                 mutator_factory=None, map_fn: MapFn | None = None):
        self.cfg = cfg
        self.registry = envs.registry_for(cfg.env)
        self._mutator_factory = mutator_factory
        self._executor: ProcessPoolExecutor | None = None
        if map_fn is not None:
            self.map_fn: MapFn = map_fn
        elif cfg.jobs > 1:
            self._executor = ProcessPoolExecutor(max_workers=cfg.jobs)
            self.map_fn = self._executor.map
        else:
            self.map_fn = map
        self.store = CheckpointStore(cfg.out_dir) if cfg.out_dir else None

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    # -- setup ---------------------------------------------------------

    def _initial_constitutions(self) -> tuple[Constitution, Constitution]:
        blue = parse(self.cfg.blue_init)
        red = parse(self.cfg.red_init)
        for label, c in (("blue", blue), ("red", red)):
            report = validate(c, self.registry)
            if not report.ok:
                raise CoevolutionError(f"initial {label} constitution invalid: "
                                       f"{report.summary()}")
        return blue, red

    def _mutator(self, slot: str, state: _LoopState) -> Mutator:
        if self._mutator_factory is not None:
            return self._mutator_factory(slot, state)
        if self.cfg.mutator == "scripted":
            return ScriptedMutator(self.registry)
        blue_ids, red_ids = _member_ids(self.cfg.env)
        visible = filter_action_records(state.last_joint_records,
                                        self.cfg.env.info_condition,
                                        slot, blue_ids, red_ids)
        mode = self.cfg.mode_blue if slot == "blue" else self.cfg.mode_red
        history = tuple(
            (r.fitness_blue if slot == "blue" else r.fitness_red)
            for r in state.records[-5:])
        return LlmMutator(self.cfg.llm, self.registry,
                          MODE_DESCRIPTIONS[mode],
                          opponent_log=render_log_lines(visible),
                          fitness_history=history)

    # -- generation body -----------------------------------------------

    def _step(self, g: int, state: _LoopState) -> GenerationRecord:
        cfg = self.cfg
        started = time.monotonic()
        rejections = {"blue": {}, "red": {}}

        if cfg.fixed_blue:
            new_blue = state.blue
        else:
            blue_rng = random.Random(derive_seed(cfg.master_seed, g, "blue"))
            blue_step = openevolve_step(
                state.blue, state.red, cfg.evolve, self._mutator("blue", state),
                cfg.env, cfg.mode_blue, Faction.BLUE, blue_rng, map_fn=self.map_fn)
            new_blue = blue_step.best.constitution
            rejections["blue"] = dict(sorted(blue_step.rejections.items()))
            blue_archive = blue_step.archive.to_snapshot()

        red_rng = random.Random(derive_seed(cfg.master_seed, g, "red"))
        red_step = openevolve_step(
            state.red, new_blue, cfg.evolve, self._mutator("red", state),
            cfg.env, cfg.mode_red, Faction.RED, red_rng, map_fn=self.map_fn)
        new_red = red_step.best.constitution
        rejections["red"] = dict(sorted(red_step.rejections.items()))

        joint = evaluate(new_blue, new_red, cfg.env, cfg.evolve.k,
                         cfg.mode_blue, Faction.BLUE,
                         seed_base=cfg.evolve.seed_base,
                         seed_stride=cfg.evolve.seed_stride, map_fn=self.map_fn)
        s_blue, s_red = joint.mean_own, joint.mean_opp
        record = GenerationRecord(
            g=g,
            const_blue=serialize(new_blue),
            const_red=serialize(new_red),
            s_blue=s_blue,
            s_red=s_red,
            fitness_blue=fitness(s_blue, s_red, cfg.mode_blue, Faction.BLUE),
            fitness_red=fitness(s_red, s_blue, cfg.mode_red, Faction.RED),
            rules_blue=len(new_blue.rules),
            rules_red=len(new_red.rules),
            rejections=rejections,
            wall_time=time.monotonic() - started,
        )

        state.blue, state.red = new_blue, new_red
        state.records.append(record)
        if cfg.mutator == "llm":  # mutation context for the next generation
            traj = envs.run(cfg.env, new_blue, new_red, cfg.evolve.seed_base)
            state.last_joint_records = _flat_action_records(traj)

        if self.store is not None:
            archives = {"red": red_step.archive.to_snapshot()}
            if not cfg.fixed_blue:
                archives["blue"] = blue_archive
            self.store.write_generation(state.records, archives, cfg.env)
        return record

    # -- public drivers --------------------------------------------------

    def execute(self, stop_after: int | None = None,
                resume: bool = False) -> list[GenerationRecord]:
        state = self._load(resume)
        start = state.records[-1].g + 1 if state.records else 1
        try:
            for g in range(start, self.cfg.generations + 1):
                self._step(g, state)
                if stop_after is not None and g >= stop_after:
                    break
        finally:
            self.close()
        return state.records

    def _load(self, resume: bool) -> _LoopState:
        if resume:
            if self.store is None:
                raise ResumeError("resume requested without an output directory")
            records = self.store.load_records(self.cfg.env)
            state = _LoopState(parse(records[-1].const_blue),
                               parse(records[-1].const_red), records)
            if self.cfg.mutator == "llm":
                traj = envs.run(self.cfg.env, state.blue, state.red,
                                self.cfg.evolve.seed_base)
                state.last_joint_records = _flat_action_records(traj)
            return state
        blue, red = self._initial_constitutions()
        if self.store is not None:
            self.store.write_config(self.cfg)
        return _LoopState(blue, red)


def run(cfg: RunConfig, stop_after: int | None = None, resume: bool = False,
        mutator_factory=None, map_fn: MapFn | None = None) -> list[GenerationRecord]:
    """Runs (or resumes) co-evolution and returns all generation records."""
    return Run(cfg, mutator_factory=mutator_factory,
               map_fn=map_fn).execute(stop_after=stop_after, resume=resume)
