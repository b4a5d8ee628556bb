"""Command line entry point: coevolve, evaluate, diagnose, baseline."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import analysis, envs
from .baselines import hunt_and_kill
from .coevolution import CheckpointStore, RunConfig, run
from .dsl import parse, validate
from .envs import EnvSpec, Faction
from .llm import LlmConfig
from .scoring import (ABSOLUTE, ADVANTAGE, FITNESS_MODES, PURE_ADVERSARY,
                      fitness, stability_score)
from .search import EvolveConfig, evaluate
from .seeds import seed_text

DEFAULT_INITS = {
    "pgg": ("pgg_blue_coop", "pgg_red_freerider"),
    "grid": ("grid_blue_cstar", "grid_red_zerosum"),
}


def _add_env_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--env", choices=("pgg", "grid"), default=None,
                        help="environment kind")
    parser.add_argument("--m", type=float, default=None,
                        help="pool multiplier (pgg only)")
    parser.add_argument("--gate", action="store_true",
                        help="enable coordination-gated attacks (grid only)")
    parser.add_argument("--info-condition", choices=envs.INFO_CONDITIONS,
                        default=None, help="action-log visibility for mutation context")


def _env_spec_from_flags(args, fallback: EnvSpec | None = None) -> EnvSpec:
    kind = args.env or (fallback.kind if fallback else "pgg")
    info = args.info_condition or (fallback.info_condition if fallback else "full")
    if fallback is not None and fallback.kind == kind:
        base = fallback.to_dict()["config"]
    else:
        base = {}
    if kind == "pgg":
        if args.m is not None:
            base["multiplier"] = args.m
        return EnvSpec.make("pgg", info, **base)
    if args.gate:
        base["coordination_gate"] = True
    if "project_requirement" in base:
        base["project_requirement"] = tuple(
            (k, int(v)) for k, v in base["project_requirement"])
    return EnvSpec.make("grid", info, **base)


def _load_constitution(path: str, registry):
    with open(path) as fh:
        text = fh.read()
    constitution = parse(text)
    report = validate(constitution, registry)
    if not report.ok:
        raise SystemExit(f"{path}: {report.summary()}")
    return constitution


# ---------------------------------------------------------------------------
# coevolve
# ---------------------------------------------------------------------------

def _cmd_coevolve(args) -> int:
    file_cfg = {}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)

    if "env" in file_cfg:
        spec = _env_spec_from_flags(args, EnvSpec.from_dict(file_cfg["env"]))
    else:
        spec = _env_spec_from_flags(args)

    evolve_kwargs = dict(file_cfg.get("evolve", {}))
    if args.k is not None:
        evolve_kwargs["k"] = args.k
    evolve = EvolveConfig(**evolve_kwargs)

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    blue_init = file_cfg.get("blue_init", "")
    red_init = file_cfg.get("red_init", "")
    if args.blue_init:
        blue_init = open(args.blue_init).read()
    if args.red_init:
        red_init = open(args.red_init).read()
    if not blue_init:
        blue_init = seed_text(DEFAULT_INITS[spec.kind][0])
    if not red_init:
        red_init = seed_text(DEFAULT_INITS[spec.kind][1])

    llm_cfg = file_cfg.get("llm")
    llm = LlmConfig(**llm_cfg) if llm_cfg else None
    if args.llm_endpoint or args.llm_model:
        base = vars(llm).copy() if llm else {}
        if args.llm_endpoint:
            base["endpoint"] = args.llm_endpoint
        if args.llm_model:
            base["model"] = args.llm_model
        llm = LlmConfig(**base)
    mutator = pick(args.mutator, "mutator", "scripted")
    if mutator == "llm" and llm is None:
        llm = LlmConfig()

    cfg = RunConfig(
        env=spec,
        generations=int(pick(args.generations, "generations", 30)),
        mode_blue=pick(args.mode_blue, "mode_blue", ADVANTAGE),
        mode_red=pick(args.mode_red, "mode_red", ADVANTAGE),
        evolve=evolve,
        mutator=mutator,
        llm=llm,
        blue_init=blue_init,
        red_init=red_init,
        fixed_blue=args.fixed_blue or file_cfg.get("fixed_blue", False),
        master_seed=int(pick(args.master_seed, "master_seed", 0)),
        out_dir=pick(args.out, "out_dir", "constarena_run"),
        jobs=int(pick(args.jobs, "jobs", 1)),
    )

    records = run(cfg, resume=args.resume)
    for r in records:
        print(f"gen {r.g}: S_B={r.s_blue:.4f} S_R={r.s_red:.4f} "
              f"fit_B={r.fitness_blue:+.4f} fit_R={r.fitness_red:+.4f} "
              f"rules={r.rules_blue}/{r.rules_red}")
    print(f"{len(records)} generations in {cfg.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _write_trace(path: str, spec: EnvSpec, blue, red, seed: int):
    traj = envs.run(spec, blue, red, seed)
    with open(path, "w") as fh:
        if spec.kind == "grid":
            for rec in traj.to_turn_records():
                for act in rec["actions"]:
                    fh.write(json.dumps({"turn": rec["turn"], **act},
                                        sort_keys=True) + "\n")
        else:
            for rec in traj.to_round_records():
                for agent, (rule, action) in enumerate(zip(rec["rules"],
                                                           rec["actions"])):
                    fh.write(json.dumps(
                        {"turn": rec["round"], "agent": agent, "rule": rule,
                         "action": action}, sort_keys=True) + "\n")


def _cmd_evaluate(args) -> int:
    spec = _env_spec_from_flags(args)
    registry = envs.registry_for(spec)
    blue = _load_constitution(args.blue, registry)
    red = _load_constitution(args.red, registry)
    result = evaluate(blue, red, spec, args.k, ADVANTAGE, Faction.BLUE)
    for seed, own, opp in zip(result.seeds, result.own, result.opp):
        print(f"seed {seed}: S_B={own.score:.4f} "
              f"(P={own.progress:.3f} V={own.viability:.3f} Cff={own.friendly_fire:.3f})  "
              f"S_R={opp.score:.4f} "
              f"(P={opp.progress:.3f} V={opp.viability:.3f} Cff={opp.friendly_fire:.3f})")
    s_b, s_r = result.mean_own, result.mean_opp
    print(f"mean: S_B={s_b:.4f} S_R={s_r:.4f}")
    print(f"fitness blue: absolute={fitness(s_b, s_r, ABSOLUTE, Faction.BLUE):+.4f} "
          f"advantage={fitness(s_b, s_r, ADVANTAGE, Faction.BLUE):+.4f}")
    print(f"fitness red: absolute={fitness(s_r, s_b, ABSOLUTE):+.4f} "
          f"advantage={fitness(s_r, s_b, ADVANTAGE):+.4f} "
          f"pure_adversary={fitness(s_r, s_b, PURE_ADVERSARY):+.4f}")
    if args.trace:
        _write_trace(args.trace, spec, blue, red, result.seeds[0])
        print(f"decision trace: {args.trace}")
    return 0


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def _cmd_diagnose(args) -> int:
    run_json = os.path.join(args.run_dir, "run.json")
    with open(run_json) as fh:
        spec = EnvSpec.from_dict(json.load(fh)["env"])
    records = CheckpointStore(args.run_dir).load_records(spec)
    report_path = args.out or os.path.join(args.run_dir, "report.csv")
    analysis.export_csv(records, report_path)

    s_blue = [r.s_blue for r in records]
    s_red = [r.s_red for r in records]
    verdicts = {
        "generations": len(records),
        "converged_at": analysis.detect_convergence(
            s_blue, s_red, args.epsilon, args.window),
        "regression_blue_at": analysis.detect_mode_regression(
            [r.fitness_blue for r in records], args.delta, args.window),
        "regression_red_at": analysis.detect_mode_regression(
            [r.fitness_red for r in records], args.delta, args.window),
    }
    if len(records) >= 2:
        try:
            stats = analysis.coupling_stats(records)
            verdicts["coupling"] = {
                "correlation": stats.correlation,
                "sum_min": stats.sum_min, "sum_max": stats.sum_max,
                "sum_std": stats.sum_std,
            }
        except analysis.AnalysisError as exc:
            verdicts["coupling"] = f"unavailable: {exc}"
    verdict_path = os.path.join(args.run_dir, "verdicts.json")
    with open(verdict_path, "w") as fh:
        json.dump(verdicts, fh, indent=2, sort_keys=True)
        fh.write("\n")

    conv = verdicts["converged_at"]
    print(f"report: {report_path}")
    print(f"converged: {'gen ' + str(conv) if conv else 'no'}")
    for side in ("blue", "red"):
        flagged = verdicts[f"regression_{side}_at"]
        print(f"mode regression ({side}): "
              f"{'gen ' + str(flagged) if flagged else 'no'}")
    print(f"verdicts: {verdict_path}")
    return 0


# ---------------------------------------------------------------------------
# baseline
# ---------------------------------------------------------------------------

def _cmd_baseline(args) -> int:
    if args.env is None:
        args.env = "grid"
    spec = _env_spec_from_flags(args)
    if spec.kind != "grid":
        raise SystemExit("the hunt-and-kill baseline runs in the grid environment")
    registry = envs.registry_for(spec)
    blue = parse(seed_text(args.vs))
    report = validate(blue, registry)
    if not report.ok:
        raise SystemExit(f"seed {args.vs}: {report.summary()}")

    rows = []
    for i in range(args.seeds):
        traj = envs.run(spec, blue, hunt_and_kill, seed=i)
        p_b, v_b, c_b = envs.metrics(traj, Faction.BLUE)
        p_r, v_r, c_r = envs.metrics(traj, Faction.RED)
        rows.append((i, stability_score(p_b, v_b, c_b),
                     stability_score(p_r, v_r, c_r), v_b))
    print(f"hunt-and-kill vs {args.vs}, {args.seeds} seeds")
    print("seed  S_B      S_R      V_B")
    for seed, s_b, s_r, v_b in rows:
        print(f"{seed:<5d} {s_b:+.4f}  {s_r:+.4f}  {v_b:.2f}")
    n = len(rows)
    print(f"mean  {sum(r[1] for r in rows) / n:+.4f}  "
          f"{sum(r[2] for r in rows) / n:+.4f}  "
          f"{sum(r[3] for r in rows) / n:.2f}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="constarena",
        description="Two-faction constitutional arms races: evolve, evaluate, "
                    "and diagnose rulebooks in game environments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coevolve", help="run the alternating evolution loop")
    p.add_argument("config", nargs="?", default=None,
                   help="JSON config file mirroring the run configuration")
    _add_env_flags(p)
    p.add_argument("--generations", type=int, default=None)
    p.add_argument("--k", type=int, default=None, help="evaluation seeds per estimate")
    p.add_argument("--mode-blue", choices=FITNESS_MODES, default=None)
    p.add_argument("--mode-red", choices=FITNESS_MODES, default=None)
    p.add_argument("--mutator", choices=("scripted", "llm"), default=None)
    p.add_argument("--resume", action="store_true",
                   help="continue from the run directory's checkpoints")
    p.add_argument("--fixed-blue", action="store_true",
                   help="freeze Blue at its initial constitution")
    p.add_argument("--master-seed", type=int, default=None)
    p.add_argument("--blue-init", default=None, help="path to a .const file")
    p.add_argument("--red-init", default=None, help="path to a .const file")
    p.add_argument("--out", default=None, help="run directory")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel episode evaluation processes")
    p.add_argument("--llm-endpoint", default=None)
    p.add_argument("--llm-model", default=None)
    p.set_defaults(handler=_cmd_coevolve)

    p = sub.add_parser("evaluate", help="K-seed evaluation of a constitution pair")
    p.add_argument("blue", help="path to the Blue .const file")
    p.add_argument("red", help="path to the Red .const file")
    _add_env_flags(p)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--trace", default=None,
                   help="write a per-agent-turn decision trace JSONL here")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("diagnose", help="analyze a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", default=None, help="report CSV path")
    p.add_argument("--delta", type=float, default=0.15)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(handler=_cmd_diagnose)

    p = sub.add_parser("baseline", help="hunt-and-kill vs a shipped seed")
    _add_env_flags(p)
    p.add_argument("--vs", default="grid_blue_cstar", help="Blue seed name")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(handler=_cmd_baseline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except SystemExit:
        raise
    except Exception as exc:  # surface a clean one-liner, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
