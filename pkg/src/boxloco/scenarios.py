"""Scenario sampling, dynamics randomization, and box-observation noise.

All distributions are uniform over their declared ranges. Sampling is a
pure function of the provided random stream, and specs serialize to JSON
lines with bit-exact round trips.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from .physics import WorldParams, apply_dynamics_scales
from .world import BoxObservation, BoxState, SkillId

TORSO_CHARACTERISTIC_LENGTH = 0.5  # m, scales the COM-offset randomization

PICKUP_X_RANGE = (0.35, 0.50)
PICKUP_Y_RANGE = (-0.30, 0.30)
PICKUP_Z_RANGE = (0.0, 1.3)
PICKUP_YAW_RANGE = (-np.deg2rad(22.5), np.deg2rad(22.5))
BOX_DIM_RANGE = (0.20, 0.45)
BOX_MASS_RANGE = (1.0, 10.0)
WALK_VX_RANGE = (-0.5, 1.0)
WALK_VY_RANGE = (-0.3, 0.3)
WALK_YAWRATE_RANGE = (-np.pi / 8, np.pi / 8)
CARRY_HEIGHT_RANGE = (1.0, 1.3)
PLACE_TARGET_DROP = 0.1  # place-variant targets may go this far below the start

PICKUP_HORIZON = 300
LOCOMOTION_HORIZON = 400


@dataclass(frozen=True)
class RandomizationRanges:
    body_mass: tuple = (-0.2, 0.2)          # fraction of nominal
    joint_damping: tuple = (-0.5, 2.5)
    ground_friction: tuple = (-0.3, 0.2)
    com_position: tuple = (-0.05, 0.05)     # fraction of characteristic length
    box_mass_obs: float = 0.5               # kg
    box_dims_obs: float = 0.05              # m
    box_start_obs: float = 0.05             # m


@dataclass(frozen=True)
class ScenarioSpec:
    skill: SkillId
    seed: int
    box_pos: Optional[np.ndarray] = None    # scenario frame; z = bottom height
    box_yaw: float = 0.0
    box_dims: Optional[np.ndarray] = None
    box_mass: float = 0.0
    target_pos: Optional[np.ndarray] = None  # scenario frame; z = bottom height
    commands: dict = field(default_factory=dict)
    dynamics_scales: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("box_pos", "box_dims", "target_pos"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))

    def to_json(self) -> str:
        def convert(v):
            if isinstance(v, np.ndarray):
                return list(v)
            return v
        payload = {
            "skill": self.skill.value,
            "seed": self.seed,
            "box_pos": convert(self.box_pos),
            "box_yaw": self.box_yaw,
            "box_dims": convert(self.box_dims),
            "box_mass": self.box_mass,
            "target_pos": convert(self.target_pos),
            "commands": self.commands,
            "dynamics_scales": {k: convert(v) for k, v in self.dynamics_scales.items()},
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "ScenarioSpec":
        d = json.loads(line)
        return ScenarioSpec(
            skill=SkillId(d["skill"]),
            seed=int(d["seed"]),
            box_pos=d["box_pos"],
            box_yaw=float(d["box_yaw"]),
            box_dims=d["box_dims"],
            box_mass=float(d["box_mass"]),
            target_pos=d["target_pos"],
            commands=d["commands"],
            dynamics_scales=d["dynamics_scales"],
        )


def write_scenarios(specs: list[ScenarioSpec], fh: TextIO) -> None:
    for s in specs:
        fh.write(s.to_json() + "\n")


def read_scenarios(fh: TextIO) -> list[ScenarioSpec]:
    return [ScenarioSpec.from_json(line) for line in fh if line.strip()]


def _u(rng: np.random.Generator, lo_hi: tuple) -> float:
    return float(rng.uniform(lo_hi[0], lo_hi[1]))


def sample_dynamics_scales(rng: np.random.Generator,
                           ranges: RandomizationRanges = RandomizationRanges(),
                           enabled: bool = True) -> dict:
    if not enabled:
        return {}
    return {
        "body_mass": 1.0 + _u(rng, ranges.body_mass),
        "joint_damping": 1.0 + _u(rng, ranges.joint_damping),
        "ground_friction": 1.0 + _u(rng, ranges.ground_friction),
        "com_offset": [
            _u(rng, ranges.com_position) * TORSO_CHARACTERISTIC_LENGTH for _ in range(3)
        ],
    }


def randomize_dynamics(params: WorldParams, rng: np.random.Generator,
                       ranges: RandomizationRanges = RandomizationRanges(),
                       enabled: bool = True) -> WorldParams:
    return apply_dynamics_scales(params, sample_dynamics_scales(rng, ranges, enabled))


@dataclass(frozen=True)
class PickupRanges:
    """Overridable sampling ranges so evaluations and reduced-randomization
    training runs can narrow the distribution."""
    x: tuple = PICKUP_X_RANGE
    y: tuple = PICKUP_Y_RANGE
    z: tuple = PICKUP_Z_RANGE
    yaw: tuple = PICKUP_YAW_RANGE
    dims: tuple = BOX_DIM_RANGE
    mass: tuple = BOX_MASS_RANGE
    place_variant: bool = False


def sample_pickup_scenario(rng: np.random.Generator,
                           ranges: PickupRanges = PickupRanges(),
                           randomization: RandomizationRanges = RandomizationRanges(),
                           randomize: bool = True) -> ScenarioSpec:
    """Box spawn in front of the robot plus a target at-or-above the start
    (place-variant runs may also target slightly below)."""
    seed = int(rng.integers(0, 2 ** 63 - 1))
    box_pos = np.array([_u(rng, ranges.x), _u(rng, ranges.y), _u(rng, ranges.z)])
    box_yaw = _u(rng, ranges.yaw)
    dims = np.array([_u(rng, ranges.dims) for _ in range(3)])
    mass = _u(rng, ranges.mass)
    z_lo = max(0.0, box_pos[2] - PLACE_TARGET_DROP) if ranges.place_variant else box_pos[2]
    target = np.array([_u(rng, ranges.x), _u(rng, ranges.y),
                       float(rng.uniform(z_lo, max(z_lo, ranges.z[1])))])
    return ScenarioSpec(
        skill=SkillId.PickUp,
        seed=seed,
        box_pos=box_pos,
        box_yaw=box_yaw,
        box_dims=dims,
        box_mass=mass,
        target_pos=target,
        commands={"target_yaw": _u(rng, ranges.yaw)},
        dynamics_scales=sample_dynamics_scales(rng, randomization, randomize),
    )


def sample_locomotion_command(rng: np.random.Generator, with_box: bool,
                              horizon: int = LOCOMOTION_HORIZON) -> dict:
    """Velocity (and box-height) command payload, including the scheduled
    mid-episode resample."""
    def draw():
        cmd = {
            "vx": _u(rng, WALK_VX_RANGE),
            "vy": _u(rng, WALK_VY_RANGE),
            "yaw_rate": _u(rng, WALK_YAWRATE_RANGE),
        }
        if with_box:
            cmd["h_cmd"] = _u(rng, CARRY_HEIGHT_RANGE)
        return cmd
    initial = draw()
    resample_at = int(rng.integers(1, horizon))
    return {**initial, "resample_at": resample_at, "next": draw()}


def sample_locomotion_scenario(rng: np.random.Generator, skill: SkillId,
                               randomization: RandomizationRanges = RandomizationRanges(),
                               randomize: bool = True) -> ScenarioSpec:
    seed = int(rng.integers(0, 2 ** 63 - 1))
    with_box = skill in (SkillId.WalkWithBox, SkillId.StandWithBox)
    commands = {}
    if skill in (SkillId.Walk, SkillId.WalkWithBox):
        commands = sample_locomotion_command(rng, with_box)
        commands["gait_phase"] = float(rng.uniform(0.0, 1.0))
    elif with_box:
        commands = {"h_cmd": _u(rng, CARRY_HEIGHT_RANGE)}
    dims = None
    mass = 0.0
    if with_box:
        dims = np.array([_u(rng, BOX_DIM_RANGE) for _ in range(3)])
        mass = _u(rng, BOX_MASS_RANGE)
    return ScenarioSpec(
        skill=skill,
        seed=seed,
        box_dims=dims,
        box_mass=mass,
        commands=commands,
        dynamics_scales=sample_dynamics_scales(rng, randomization, randomize),
    )


def sample_scenario(rng: np.random.Generator, skill: SkillId, **kwargs) -> ScenarioSpec:
    if skill == SkillId.PickUp:
        return sample_pickup_scenario(rng, **kwargs)
    return sample_locomotion_scenario(rng, skill, **kwargs)


def perturb_box_observation(true_box: BoxState, rng: np.random.Generator,
                            ranges: RandomizationRanges = RandomizationRanges(),
                            enabled: bool = True) -> BoxObservation:
    """Uniformly perturbed box knowledge (same frame as the input state);
    draws are repeated until dims and mass stay positive."""
    from .geom import quat_yaw
    yaw = quat_yaw(true_box.quat)
    if not enabled:
        return BoxObservation(dims=true_box.dims.copy(), mass=true_box.mass,
                              start_pos=true_box.pos.copy(), start_yaw=yaw)
    for _ in range(1000):
        dims = true_box.dims + rng.uniform(-ranges.box_dims_obs, ranges.box_dims_obs, size=3)
        mass = true_box.mass + float(rng.uniform(-ranges.box_mass_obs, ranges.box_mass_obs))
        if np.all(dims > 0) and mass > 0:
            pos = true_box.pos + rng.uniform(-ranges.box_start_obs, ranges.box_start_obs, size=3)
            return BoxObservation(dims=dims, mass=mass, start_pos=pos, start_yaw=yaw)
    raise RuntimeError("could not draw a positive box observation")


def horizon_for(skill: SkillId) -> int:
    return PICKUP_HORIZON if skill == SkillId.PickUp else LOCOMOTION_HORIZON
