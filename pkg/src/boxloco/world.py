"""Domain types shared across the system, plus policy observation assembly.

The robot is reduced-order: a floating torso with 6 directly actuated pose
DoF, two 3-DoF point-effector hands, and a two-point foot abstraction for
support. Actuator coordinate layout (12 entries, used for PD setpoints,
actions, and observations):

    0  lean x      base offset from the foot-midpoint anchor, stance frame
    1  lean y
    2  height      base z, absolute
    3  roll        torso roll, absolute
    4  pitch       torso pitch, absolute
    5  yaw offset  torso yaw relative to the stance heading
    6:9   left hand position in the base yaw frame
    9:12  right hand position in the base yaw frame

All types are immutable value objects; simulation code returns new
instances rather than mutating.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from .geom import quat_yaw, yaw_into

N_ACTUATORS = 12
ROBOT_OBS_DIM = 33
N_SKILLS = 5
COMMAND_PAYLOAD_DIM = 12
OBS_DIM = ROBOT_OBS_DIM + N_SKILLS + COMMAND_PAYLOAD_DIM + 2  # 52

# Per-channel noise half-widths for the 33 robot entries, scaled by the
# noise_scale argument: 0.01 for position-like, 0.05 for velocity-like,
# none on the binary contact flags.
_POS_NOISE = 0.01
_VEL_NOISE = 0.05
ROBOT_OBS_NOISE_SCALES = np.concatenate([
    np.full(4, _POS_NOISE),    # base quat
    np.full(1, _POS_NOISE),    # base z
    np.full(3, _VEL_NOISE),    # base linvel
    np.full(3, _VEL_NOISE),    # base angvel
    np.full(6, _POS_NOISE),    # hand positions
    np.full(6, _VEL_NOISE),    # hand velocities
    np.zeros(2),               # foot contact flags
    np.full(6, _POS_NOISE),    # base actuator coordinates
    np.full(2, _POS_NOISE),    # cop offset
])

ACTION_CLAMP = 0.3
CONTACT_TOLERANCE = 0.005  # m, foot-height slack while flagged in stance


class DimensionError(ValueError):
    """A constituent vector had an unexpected length."""


class SkillId(Enum):
    Walk = "Walk"
    Stand = "Stand"
    PickUp = "PickUp"
    WalkWithBox = "WalkWithBox"
    StandWithBox = "StandWithBox"


class ActionMode(Enum):
    Relative = "Relative"
    Absolute = "Absolute"


_F64 = np.dtype(np.float64)


def _vec(x, n: int, name: str) -> np.ndarray:
    if type(x) is np.ndarray and x.dtype == _F64 and x.shape == (n,):
        return x
    a = np.asarray(x, dtype=float)
    if a.shape != (n,):
        raise DimensionError(f"{name} must have length {n}, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class RobotState:
    base_pos: np.ndarray
    base_quat: np.ndarray      # (w, x, y, z), unit norm
    base_linvel: np.ndarray
    base_angvel: np.ndarray
    hand_pos_L: np.ndarray
    hand_pos_R: np.ndarray
    hand_vel_L: np.ndarray
    hand_vel_R: np.ndarray
    foot_pos_L: np.ndarray
    foot_pos_R: np.ndarray
    foot_contact_L: bool
    foot_contact_R: bool
    foot_vel_L: np.ndarray
    foot_vel_R: np.ndarray
    cop: np.ndarray            # ground-plane (x, y)
    actuator_pos: np.ndarray
    actuator_vel: np.ndarray
    actuator_force: np.ndarray
    prev_action: np.ndarray

    def __post_init__(self):
        for name in ("base_pos", "base_linvel", "base_angvel", "hand_pos_L",
                     "hand_pos_R", "hand_vel_L", "hand_vel_R", "foot_pos_L",
                     "foot_pos_R", "foot_vel_L", "foot_vel_R"):
            object.__setattr__(self, name, _vec(getattr(self, name), 3, name))
        object.__setattr__(self, "base_quat", _vec(self.base_quat, 4, "base_quat"))
        object.__setattr__(self, "cop", _vec(self.cop, 2, "cop"))
        for name in ("actuator_pos", "actuator_vel", "actuator_force", "prev_action"):
            object.__setattr__(self, name, _vec(getattr(self, name), N_ACTUATORS, name))

    def validate(self) -> None:
        if abs(float(np.linalg.norm(self.base_quat)) - 1.0) > 1e-9:
            raise ValueError("base_quat is not unit norm")
        for contact, pos, side in ((self.foot_contact_L, self.foot_pos_L, "L"),
                                   (self.foot_contact_R, self.foot_pos_R, "R")):
            if contact and abs(float(pos[2])) > CONTACT_TOLERANCE:
                raise ValueError(f"foot_{side} flagged in contact but off the ground")


@dataclass(frozen=True)
class BoxState:
    pos: np.ndarray            # center, world frame
    quat: np.ndarray
    linvel: np.ndarray
    angvel: np.ndarray
    linacc: np.ndarray
    dims: np.ndarray           # (length, width, height)
    mass: float
    contact_hand_L: bool
    contact_hand_R: bool
    contact_table: bool
    contact_ground: bool
    force_hand_L: np.ndarray   # force on the box, world frame
    force_hand_R: np.ndarray
    force_table: np.ndarray

    def __post_init__(self):
        for name in ("pos", "linvel", "angvel", "linacc", "dims",
                     "force_hand_L", "force_hand_R", "force_table"):
            object.__setattr__(self, name, _vec(getattr(self, name), 3, name))
        object.__setattr__(self, "quat", _vec(self.quat, 4, "quat"))
        if not np.all(self.dims > 0):
            raise ValueError("box dims must be positive")
        if self.mass <= 0:
            raise ValueError("box mass must be positive")
        if not self.contact_table and np.any(self.force_table != 0.0):
            raise ValueError("force_table must be zero without table contact")


@dataclass(frozen=True)
class BoxObservation:
    """Noisy box knowledge handed to the policy at skill start.

    Positions/yaw are expressed in the robot's yaw frame at skill start.
    """
    dims: np.ndarray
    mass: float
    start_pos: np.ndarray
    start_yaw: float

    def __post_init__(self):
        object.__setattr__(self, "dims", _vec(self.dims, 3, "dims"))
        object.__setattr__(self, "start_pos", _vec(self.start_pos, 3, "start_pos"))
        if not np.all(self.dims > 0) or self.mass <= 0:
            raise ValueError("observed dims and mass must stay positive")


@dataclass(frozen=True)
class WalkCommand:
    vx: float
    vy: float
    yaw_rate: float


@dataclass(frozen=True)
class StandCommand:
    pass


@dataclass(frozen=True)
class PickUpCommand:
    box_obs: BoxObservation
    target_pos: np.ndarray     # robot yaw frame at skill start
    p_contact: float = 0.0
    p_lift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "target_pos", _vec(self.target_pos, 3, "target_pos"))


@dataclass(frozen=True)
class WalkBoxCommand:
    vx: float
    vy: float
    yaw_rate: float
    box_obs: BoxObservation
    h_cmd: float


@dataclass(frozen=True)
class StandBoxCommand:
    box_obs: BoxObservation
    h_cmd: float


Command = Union[WalkCommand, StandCommand, PickUpCommand, WalkBoxCommand, StandBoxCommand]

_COMMAND_SKILL = {
    WalkCommand: SkillId.Walk,
    StandCommand: SkillId.Stand,
    PickUpCommand: SkillId.PickUp,
    WalkBoxCommand: SkillId.WalkWithBox,
    StandBoxCommand: SkillId.StandWithBox,
}

_SKILL_INDEX = {s: i for i, s in enumerate(SkillId)}


def skill_of_command(cmd: Command) -> SkillId:
    return _COMMAND_SKILL[type(cmd)]


@dataclass(frozen=True)
class PhaseClock:
    """Non-periodic pickup clock in 50 Hz policy timesteps.

    p_contact ramps 0 to 1 over [0, t_contact], p_lift over
    [t_contact, t_lift]; both saturate at 1.
    """
    t: int = 0
    t_contact: int = 100
    t_lift: int = 175

    @property
    def p_contact(self) -> float:
        return float(np.clip(self.t / self.t_contact, 0.0, 1.0))

    @property
    def p_lift(self) -> float:
        return float(np.clip((self.t - self.t_contact) / (self.t_lift - self.t_contact), 0.0, 1.0))


def advance_clock(clock: PhaseClock) -> PhaseClock:
    return dataclasses.replace(clock, t=clock.t + 1)


@dataclass(frozen=True)
class Action:
    deltas: np.ndarray
    mode: ActionMode = ActionMode.Relative

    def __post_init__(self):
        object.__setattr__(self, "deltas", _vec(self.deltas, N_ACTUATORS, "deltas"))

    def clamped(self) -> np.ndarray:
        return np.clip(self.deltas, -ACTION_CLAMP, ACTION_CLAMP)


def command_payload(cmd: Command) -> np.ndarray:
    """Zero-padded fixed-width command payload (12 entries)."""
    out = np.zeros(COMMAND_PAYLOAD_DIM)
    if isinstance(cmd, WalkCommand):
        out[0:3] = (cmd.vx, cmd.vy, cmd.yaw_rate)
    elif isinstance(cmd, StandCommand):
        pass
    elif isinstance(cmd, PickUpCommand):
        out[0:3] = cmd.box_obs.dims
        out[3] = cmd.box_obs.mass
        out[4:7] = cmd.box_obs.start_pos
        out[7] = cmd.box_obs.start_yaw
        out[8:11] = cmd.target_pos
    elif isinstance(cmd, WalkBoxCommand):
        out[0:3] = (cmd.vx, cmd.vy, cmd.yaw_rate)
        out[3:6] = cmd.box_obs.dims
        out[6] = cmd.box_obs.mass
        out[7] = cmd.h_cmd
    elif isinstance(cmd, StandBoxCommand):
        out[0:3] = cmd.box_obs.dims
        out[3] = cmd.box_obs.mass
        out[4] = cmd.h_cmd
    else:
        raise TypeError(f"unknown command {cmd!r}")
    return out


def robot_observation(state: RobotState) -> np.ndarray:
    """The 33 noise-eligible robot entries, yaw-frame quantities throughout."""
    yaw = quat_yaw(state.base_quat)
    hand_l = state.hand_pos_L - state.base_pos
    hand_r = state.hand_pos_R - state.base_pos
    hvel_l = state.hand_vel_L - state.base_linvel
    hvel_r = state.hand_vel_R - state.base_linvel
    favg = 0.5 * (state.foot_pos_L[:2] + state.foot_pos_R[:2])
    parts = [
        state.base_quat,
        [state.base_pos[2]],
        np.concatenate([yaw_into(yaw, state.base_linvel[:2]), state.base_linvel[2:]]),
        np.concatenate([yaw_into(yaw, state.base_angvel[:2]), state.base_angvel[2:]]),
        np.concatenate([yaw_into(yaw, hand_l[:2]), hand_l[2:]]),
        np.concatenate([yaw_into(yaw, hand_r[:2]), hand_r[2:]]),
        np.concatenate([yaw_into(yaw, hvel_l[:2]), hvel_l[2:]]),
        np.concatenate([yaw_into(yaw, hvel_r[:2]), hvel_r[2:]]),
        [float(state.foot_contact_L), float(state.foot_contact_R)],
        state.actuator_pos[0:6],
        yaw_into(yaw, state.cop - favg),
    ]
    obs = np.concatenate([np.asarray(p, dtype=float) for p in parts])
    if obs.shape != (ROBOT_OBS_DIM,):
        raise DimensionError(f"robot observation has shape {obs.shape}")
    return obs


def assemble_observation(state: RobotState, cmd: Command, clock: PhaseClock,
                         noise_scale: float, rng: np.random.Generator) -> np.ndarray:
    """Full policy input: 33 robot entries (noised), skill one-hot,
    zero-padded command payload, and the two phase indicators."""
    robot = robot_observation(state)
    if noise_scale > 0.0:
        half_widths = noise_scale * ROBOT_OBS_NOISE_SCALES
        robot = robot + rng.uniform(-1.0, 1.0, size=ROBOT_OBS_DIM) * half_widths
    one_hot = np.zeros(N_SKILLS)
    one_hot[_SKILL_INDEX[skill_of_command(cmd)]] = 1.0
    payload = command_payload(cmd)
    obs = np.concatenate([robot, one_hot, payload, [clock.p_contact, clock.p_lift]])
    if obs.shape != (OBS_DIM,):
        raise DimensionError(f"observation has shape {obs.shape}, expected ({OBS_DIM},)")
    return obs
