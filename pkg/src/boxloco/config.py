"""Run-configuration files: YAML (or JSON) merging training settings with
world-parameter, reward-weight, and scenario-range overrides. Unknown keys
are rejected with their path; the fully resolved configuration is echoed
into the run's output directory.
"""
from __future__ import annotations

import dataclasses
import json
import os
from typing import Optional

import yaml

from .physics import WorldParams
from .ppo import TrainConfig
from .rewards import RewardWeights
from .scenarios import PickupRanges


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.key_path = path
        super().__init__(f"{path}: {message}")


_TOP_LEVEL = {"train", "world_params", "reward_weights", "pickup_ranges", "out_dir", "seed"}


def _check_keys(section: dict, allowed: set, path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")


def load_run_config(path: str, overrides: Optional[dict] = None) -> TrainConfig:
    """Parse and validate a run configuration into a TrainConfig."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    _check_keys(raw, _TOP_LEVEL, "<root>")

    train_section = dict(raw.get("train") or {})
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    _check_keys(train_section, train_fields, "train")

    wp = dict(raw.get("world_params") or {})
    wp_fields = {f.name for f in dataclasses.fields(WorldParams)}
    _check_keys(wp, wp_fields, "world_params")

    rw = dict(raw.get("reward_weights") or {})
    try:
        RewardWeights().overridden(rw)
    except KeyError as e:
        raise ConfigError(f"reward_weights.{e.args[0]}", "unknown reward weight") from e

    pr = dict(raw.get("pickup_ranges") or {})
    pr_fields = {f.name for f in dataclasses.fields(PickupRanges)}
    _check_keys(pr, pr_fields, "pickup_ranges")

    train_section["world_param_overrides"] = wp
    train_section["reward_weight_overrides"] = rw
    train_section["pickup_ranges"] = pr
    if "out_dir" in raw:
        train_section["out_dir"] = raw["out_dir"]
    if "seed" in raw:
        train_section["seed"] = int(raw["seed"])
    for k, v in (overrides or {}).items():
        if v is not None:
            train_section[k] = v
    try:
        return TrainConfig.from_dict(train_section)
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError("train", str(e)) from e


def echo_resolved_config(config: TrainConfig) -> str:
    """Write the fully resolved configuration into the output directory."""
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "resolved_config.json")
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
    return path
