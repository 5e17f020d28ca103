"""Command-line harness: training, evaluation, ablations, limit search,
dataset generation, full-task runs, and the teleop service.

Exit codes: 0 success, 2 usage, 3 invalid configuration/script (with a
machine-readable ERROR line on stderr), 1 other failures.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Optional

import numpy as np
import yaml

from .config import ConfigError, echo_resolved_config, load_run_config
from .policy import load_checkpoint
from .ppo import LIMIT_PARAMS, TrainConfig, evaluate, find_limits, init_policy, train
from .skills import (DisallowedTransition, SkillGraph, generate_initial_states,
                     low_speed_filter, run_full_task, StateDataset)
from .world import SkillId

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3


def _error(kind: str, **detail) -> None:
    sys.stderr.write("ERROR " + json.dumps({"kind": kind, **detail}) + "\n")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boxloco",
                                description="Box loco-manipulation harness")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one skill policy")
    t.add_argument("--skill", required=True, choices=[s.value for s in SkillId])
    t.add_argument("--config", help="run-configuration file (YAML/JSON)")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None, help="output directory override")
    t.add_argument("--resume", action="store_true")

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--skill", required=True, choices=[s.value for s in SkillId])
    e.add_argument("--episodes", type=int, default=10000)
    e.add_argument("--config", default=None)
    e.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("ablate", help="train a pickup ablation variant")
    a.add_argument("--variant", required=True, choices=["no-hand-traj", "absolute-action"])
    a.add_argument("--config", default=None)
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--out", default=None)

    l = sub.add_parser("limits", help="out-of-distribution limit search")
    l.add_argument("--param", required=True, choices=list(LIMIT_PARAMS))
    l.add_argument("--checkpoint", required=True)
    l.add_argument("--step-size", type=float, default=None)
    l.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("gen-states", help="generate an initial-state dataset")
    g.add_argument("--from-skill", required=True, choices=[s.value for s in SkillId])
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--out", required=True)
    g.add_argument("--max-speed", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run-task", help="run a scripted full task")
    r.add_argument("--script", required=True, help="YAML task script")
    r.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("serve", help="serve teleoperation over websocket")
    s.add_argument("--port", type=int, default=8787)
    s.add_argument("--policies", default=None,
                   help="YAML mapping of skill -> checkpoint path (default: fresh policies)")
    s.add_argument("--time-scale", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    return p


_DEFAULT_STEP_SIZES = {"mass": 0.5, "size": 0.02, "dx": 0.02, "dy": 0.02,
                       "dz": 0.05, "rotation": 2.5}


def _load_config(path: Optional[str], overrides: dict) -> TrainConfig:
    if path:
        return load_run_config(path, overrides)
    cfg = {k: v for k, v in overrides.items() if v is not None}
    return TrainConfig.from_dict(cfg)


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            config = _load_config(args.config, {"skill": args.skill, "seed": args.seed,
                                                "out_dir": args.out})
            echo_resolved_config(config)
            summary = train(config, resume=args.resume)
            print(json.dumps(summary, indent=2))
            return EXIT_OK

        if args.command == "eval":
            config = _load_config(args.config, {"skill": args.skill}) if args.config else None
            params = load_checkpoint(args.checkpoint)
            report = evaluate(params, SkillId(args.skill), args.episodes,
                              seed=args.seed, config=config)
            print(json.dumps(report.to_dict(), indent=2))
            return EXIT_OK

        if args.command == "ablate":
            flags = {"no-hand-traj": {"no_hand_trajectory": True},
                     "absolute-action": {"absolute_action_space": True}}[args.variant]
            overrides = {"skill": SkillId.PickUp.value, "seed": args.seed,
                         "out_dir": args.out, **flags}
            config = _load_config(args.config, overrides)
            echo_resolved_config(config)
            summary = train(config)
            summary["variant"] = args.variant
            print(json.dumps(summary, indent=2))
            return EXIT_OK

        if args.command == "limits":
            params = load_checkpoint(args.checkpoint)
            step = args.step_size or _DEFAULT_STEP_SIZES[args.param]
            result = find_limits(params, args.param, step, seed=args.seed)
            print(json.dumps(result, indent=2))
            return EXIT_OK

        if args.command == "gen-states":
            params = load_checkpoint(args.checkpoint)
            dataset = generate_initial_states(
                params, SkillId(args.from_skill), args.n,
                filter_predicate=low_speed_filter(args.max_speed), seed=args.seed)
            dataset.save(args.out)
            print(json.dumps({"entries": len(dataset.entries), "path": args.out}))
            return EXIT_OK

        if args.command == "run-task":
            with open(args.script) as fh:
                script = yaml.safe_load(fh)
            if not isinstance(script, dict) or "phases" not in script:
                raise ConfigError("<script>", "task script needs a 'phases' list")
            policies = {}
            for name, ck in (script.get("policies") or {}).items():
                policies[SkillId(name)] = load_checkpoint(ck)
            missing = {SkillId(p["skill"]) for p in script["phases"]} - set(policies)
            if missing:
                # fall back to fresh (untrained) policies so dry runs work
                base = TrainConfig(skill=SkillId.Stand, workers=1)
                for skill in missing:
                    policies[skill] = init_policy(dataclasses.replace(base, skill=skill))
            log = run_full_task(policies, script["phases"], seed=args.seed)
            print(json.dumps(log, indent=2))
            return EXIT_OK

        if args.command == "serve":
            from .teleop import serve
            policies = {}
            if args.policies:
                with open(args.policies) as fh:
                    mapping = yaml.safe_load(fh) or {}
                for name, ck in mapping.items():
                    policies[SkillId(name)] = load_checkpoint(ck)
            else:
                base = TrainConfig(skill=SkillId.Stand, workers=1)
                for skill in SkillId:
                    policies[skill] = init_policy(dataclasses.replace(base, skill=skill))
            serve(policies, port=args.port, time_scale=args.time_scale, seed=args.seed)
            return EXIT_OK
    except ConfigError as e:
        _error("invalid_config", key_path=e.key_path, message=str(e))
        return EXIT_CONFIG
    except DisallowedTransition as e:
        _error("disallowed_transition", message=str(e))
        return EXIT_CONFIG
    except FileNotFoundError as e:
        _error("missing_file", path=str(e.filename))
        return EXIT_CONFIG
    except (KeyError, ValueError) as e:
        _error("invalid_input", message=str(e))
        return EXIT_CONFIG
    parser.error("unknown command")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
