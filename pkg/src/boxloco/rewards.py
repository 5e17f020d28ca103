"""Reward terms, weighting, sparse penalties, and termination conditions
for all five skills, plus the pickup hand-trajectory generator.

Every dense term is a nonnegative cost r_i composed as sum_i w_i*exp(-r_i).
The pickup contact bonus is added directly (gated by the contact phase) and
sparse penalties subtract 0.1 per event.

Orientation costs are measured against the scenario reference heading so
that rewards are invariant under a rigid yaw rotation of the whole world.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geom import (quat_from_yaw, quat_mul, quat_conj, quat_to_rpy, quat_yaw, rot2d,
                   tilt_angles, wrap_angle, yaw_into)
from .physics import ARM_TARGET_L, ARM_TARGET_R, World
from .world import (Action, BoxObservation, PhaseClock, PickUpCommand, SkillId,
                    WalkCommand, WalkBoxCommand, StandBoxCommand)

def _norm(v) -> float:
    return float(np.sqrt(v @ v))


STAND_HEIGHT = 0.9
STANCE_WIDTH_TARGET = 0.385
HAND_SPEED_LIMIT = 1.0
SPARSE_PENALTY = -0.1
CARRY_OFFSET = np.array([0.4, 0.0])  # forward carry point in the base frame

# termination reasons
TORSO_LOW = "torso_low"
TORSO_PITCH = "torso_pitch"
TORSO_ROLL = "torso_roll"
FOOT_OFF_GROUND = "foot_off_ground"
ROBOT_TABLE_CONTACT = "robot_table_contact"
BOX_ON_GROUND = "box_on_ground"
MISSED_CONTACT = "missed_contact"
MISSED_LIFT = "missed_lift"
LOST_BOX = "lost_box"

TORSO_MIN_HEIGHT = 0.40
TORSO_MAX_PITCH = np.deg2rad(35.0)
CONTACT_GRACE_STEPS = 25       # 0.5 s at 50 Hz
STAND_FOOT_GRACE_STEPS = 100
BOX_GROUND_DEBOUNCE = 5        # consecutive substeps

PICKUP_WEIGHTS = {
    "hand_pos": 0.15,
    "hand_roll": 0.05,
    "box_pos": 0.15,
    "box_orient": 0.05,
    "table_force": 0.05,
    "cop": 0.1,
    "base_orient": 0.05,
    "foot_orient": 0.1,
    "motor_vel": 0.05,
    "foot_vel": 0.05,
    "hand_force": 0.05,
    "box_acc": 0.05,
    "action_change": 0.05,
    "torque": 0.05,
}

# terms the paper leaves unweighted (standing/locomotion specific) default
# to 0.1 each and are configuration-overridable
EXTRA_WEIGHTS = {
    "base_vel": 0.1,
    "height": 0.1,
    "arm": 0.1,
    "stance_width": 0.1,
    "stance_x": 0.1,
    "box_height": 0.1,
    "box_force": 0.1,
    "cmd_vel": 0.1,
    "cmd_yaw": 0.1,
    "swing_contact": 0.1,
    "stance_foot_vel": 0.1,
    "hand_sym": 0.1,
    "hand_front": 0.1,
}


@dataclass(frozen=True)
class RewardWeights:
    weights: dict = field(default_factory=lambda: {**PICKUP_WEIGHTS, **EXTRA_WEIGHTS})
    contact_bonus_per_hand: float = 0.05

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("reward weights must be non-negative")

    def __getitem__(self, name: str) -> float:
        return self.weights[name]

    def overridden(self, overrides: dict) -> "RewardWeights":
        merged = dict(self.weights)
        bonus = self.contact_bonus_per_hand
        for k, v in overrides.items():
            if k == "contact_bonus_per_hand":
                bonus = float(v)
            elif k in merged:
                merged[k] = float(v)
            else:
                raise KeyError(k)
        return RewardWeights(weights=merged, contact_bonus_per_hand=bonus)


@dataclass
class RewardBreakdown:
    terms: dict = field(default_factory=dict)   # name -> raw cost (pre-exp)
    sparse_penalty: float = 0.0                 # <= 0
    contact_bonus: float = 0.0                  # >= 0

    def merge(self, other: "RewardBreakdown") -> "RewardBreakdown":
        terms = {**self.terms, **other.terms}
        return RewardBreakdown(terms, self.sparse_penalty + other.sparse_penalty,
                               self.contact_bonus + other.contact_bonus)


@dataclass(frozen=True)
class HandTrajectory:
    """Piecewise-linear hand targets: start -> 10 cm outboard of the box
    faces (t=75) -> on the faces (t=100) -> flanking the target (t=175)."""
    start_L: np.ndarray
    start_R: np.ndarray
    goal1_L: np.ndarray
    goal1_R: np.ndarray
    goal2_L: np.ndarray
    goal2_R: np.ndarray
    goal3_L: np.ndarray
    goal3_R: np.ndarray
    t_goal1: int = 75
    t_goal2: int = 100
    t_goal3: int = 175

    def targets_at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        knots = ((0, self.start_L, self.start_R),
                 (self.t_goal1, self.goal1_L, self.goal1_R),
                 (self.t_goal2, self.goal2_L, self.goal2_R),
                 (self.t_goal3, self.goal3_L, self.goal3_R))
        if t >= self.t_goal3:
            return self.goal3_L, self.goal3_R
        for (t0, l0, r0), (t1, l1, r1) in zip(knots, knots[1:]):
            if t0 <= t < t1:
                a = (t - t0) / (t1 - t0)
                return l0 + a * (l1 - l0), r0 + a * (r1 - r0)
        return self.goal3_L, self.goal3_R


def build_hand_trajectory(box_obs: BoxObservation, target_pos: np.ndarray,
                          initial_hands: tuple[np.ndarray, np.ndarray],
                          outboard: float = 0.10) -> HandTrajectory:
    """Goal positions around the observed box, all in the caller's frame.

    goal1 sits `outboard` beyond each transverse face at box mid-height,
    goal2 on the faces, goal3 flanks the target spaced one box width apart.
    """
    width = float(box_obs.dims[1])
    lateral = rot2d(box_obs.start_yaw) @ np.array([0.0, 1.0])
    lat3 = np.array([lateral[0], lateral[1], 0.0])
    center = np.asarray(box_obs.start_pos, dtype=float)
    target = np.asarray(target_pos, dtype=float)
    g1_l = center + (0.5 * width + outboard) * lat3
    g1_r = center - (0.5 * width + outboard) * lat3
    g2_l = center + 0.5 * width * lat3
    g2_r = center - 0.5 * width * lat3
    g3_l = target + 0.5 * width * lat3
    g3_r = target - 0.5 * width * lat3
    return HandTrajectory(
        start_L=np.asarray(initial_hands[0], dtype=float),
        start_R=np.asarray(initial_hands[1], dtype=float),
        goal1_L=g1_l, goal1_R=g1_r,
        goal2_L=g2_l, goal2_R=g2_r,
        goal3_L=g3_l, goal3_R=g3_r,
    )


def build_static_hand_targets(box_obs: BoxObservation, target_pos: np.ndarray) -> HandTrajectory:
    """Ablation variant: constant targets at the target pose's face centers."""
    width = float(box_obs.dims[1])
    lateral = rot2d(box_obs.start_yaw) @ np.array([0.0, 1.0])
    lat3 = np.array([lateral[0], lateral[1], 0.0])
    target = np.asarray(target_pos, dtype=float)
    l = target + 0.5 * width * lat3
    r = target - 0.5 * width * lat3
    return HandTrajectory(start_L=l, start_R=r, goal1_L=l, goal1_R=r,
                          goal2_L=l, goal2_R=r, goal3_L=l, goal3_R=r)


def _rel_quat_cost(quat: np.ndarray, ref_yaw: float) -> float:
    """1 - <q, identity>^2 with q measured against the reference heading."""
    rel = quat_mul(quat_conj(quat_from_yaw(ref_yaw)), quat)
    return float(1.0 - rel[0] ** 2)


def _foot_orient_cost(world: World, ref_yaw: Optional[float] = None) -> float:
    """Two-point feet carry no quaternion; the stance line standing in for
    foot orientation should run along the reference frame's +y axis."""
    if ref_yaw is None:
        ref_yaw = world.ref_yaw
    d = world.robot.foot_pos_L[:2] - world.robot.foot_pos_R[:2]
    if _norm(d) < 1e-9:
        return 0.0
    line_yaw = np.arctan2(d[1], d[0]) - np.pi / 2
    delta = wrap_angle(line_yaw - ref_yaw)
    per_foot = 1.0 - np.cos(delta / 2.0) ** 2
    return float(2.0 * per_foot)


def _hand_roll_cost(world: World) -> float:
    """Point hands have no roll; the tilt of the inter-hand segment from
    horizontal plays its role (each hand charged the common angle)."""
    d = world.robot.hand_pos_L - world.robot.hand_pos_R
    horiz = float(np.hypot(d[0], d[1]))
    if horiz < 1e-9 and abs(d[2]) < 1e-9:
        return 0.0
    tilt = abs(float(np.arctan2(d[2], horiz)))
    return 2.0 * tilt


def _stand_terms(world: World) -> dict:
    r = world.robot
    favg = 0.5 * (r.foot_pos_L[:2] + r.foot_pos_R[:2])
    return {
        "cop": _norm((r.cop - favg)),
        "base_orient": _rel_quat_cost(r.base_quat, world.ref_yaw),
        "foot_orient": _foot_orient_cost(world),
        "motor_vel": _norm((r.actuator_vel)),
        "foot_vel": _norm((r.foot_vel_L)) + _norm((r.foot_vel_R)),
    }


def _reg_terms(world: World, action: Action, prev_action: Action) -> dict:
    b = world.box
    return {
        "action_change": _norm((action.clamped() - prev_action.clamped())),
        "torque": _norm((world.robot.actuator_force)),
        "hand_force": _norm((b.force_hand_L)) + _norm((b.force_hand_R)),
        "box_acc": _norm((b.linacc)),
    }


def _sparse_events(world: World, include_hand_speed: bool = True) -> float:
    penalty = 0.0
    if world.self_collision:
        penalty += SPARSE_PENALTY
    if include_hand_speed:
        speed = max(_norm((world.robot.hand_vel_L)),
                    _norm((world.robot.hand_vel_R)))
        if speed > HAND_SPEED_LIMIT:
            penalty += SPARSE_PENALTY
    return penalty


def box_target_at(world: World, cmd: PickUpCommand, clock: PhaseClock) -> np.ndarray:
    """Box target trajectory: hold at the start through the contact phase,
    then move linearly to the commanded target by the end of the lift."""
    start = world.ref_to_world(cmd.box_obs.start_pos)
    target = world.ref_to_world(cmd.target_pos)
    if clock.t <= clock.t_contact:
        return start
    a = min((clock.t - clock.t_contact) / (clock.t_lift - clock.t_contact), 1.0)
    return start + a * (target - start)


def pickup_reward(world: World, cmd: PickUpCommand, clock: PhaseClock,
                  traj: HandTrajectory, action: Action, prev_action: Action) -> RewardBreakdown:
    r = world.robot
    b = world.box
    target_l, target_r = traj.targets_at(clock.t)
    box_target = box_target_at(world, cmd, clock)
    box_roll, box_pitch = tilt_angles(b.quat)
    terms = {
        "hand_pos": _norm((r.hand_pos_L - target_l))
                    + _norm((r.hand_pos_R - target_r)),
        "hand_roll": _hand_roll_cost(world),
        "box_pos": _norm((b.pos - box_target)),
        "box_orient": abs(float(box_roll)) + abs(float(box_pitch)),
        "table_force": _norm((b.force_table)),
    }
    terms.update(_stand_terms(world))
    terms.update(_reg_terms(world, action, prev_action))
    bonus = 0.0
    if clock.t >= clock.t_contact:
        bonus = 0.05 * float(b.contact_hand_L) + 0.05 * float(b.contact_hand_R)
    return RewardBreakdown(terms=terms, sparse_penalty=_sparse_events(world),
                           contact_bonus=bonus)


def stand_reward(world: World, action: Action, prev_action: Action) -> RewardBreakdown:
    r = world.robot
    yaw = quat_yaw(r.base_quat)
    arm_l = np.concatenate([yaw_into(yaw, (r.hand_pos_L - r.base_pos)[:2]),
                            (r.hand_pos_L - r.base_pos)[2:]])
    arm_r = np.concatenate([yaw_into(yaw, (r.hand_pos_R - r.base_pos)[:2]),
                            (r.hand_pos_R - r.base_pos)[2:]])
    foot_l = world.world_to_ref(r.foot_pos_L)
    foot_r = world.world_to_ref(r.foot_pos_R)
    terms = {
        "base_vel": _norm((r.base_linvel)),
        "height": abs(float(r.base_pos[2]) - STAND_HEIGHT),
        "arm": _norm((arm_l - ARM_TARGET_L))
               + _norm((arm_r - ARM_TARGET_R)),
        "stance_width": abs(float(foot_l[1] - foot_r[1]) - STANCE_WIDTH_TARGET),
        "stance_x": abs(float(foot_l[0] - foot_r[0])),
    }
    terms.update(_stand_terms(world))
    terms.update(_reg_terms(world, action, prev_action))
    return RewardBreakdown(terms=terms,
                           sparse_penalty=_sparse_events(world, include_hand_speed=False))


def box_carry_terms(world: World, h_cmd: float) -> RewardBreakdown:
    """Box terms for the carrying skills: hold the box at the commanded
    height in front of the base, level, with gentle hand forces."""
    b = world.box
    r = world.robot
    yaw = quat_yaw(r.base_quat)
    rel = b.pos - np.array([r.base_pos[0], r.base_pos[1], 0.0])
    rel_xy = yaw_into(yaw, rel[:2])
    carry_target = np.array([CARRY_OFFSET[0], CARRY_OFFSET[1], h_cmd])
    box_in_base = np.array([rel_xy[0], rel_xy[1], rel[2]])
    box_roll, box_pitch = tilt_angles(b.quat)
    terms = {
        "box_height": _norm((box_in_base - carry_target)),
        "box_orient": abs(float(box_roll)) + abs(float(box_pitch)),
        "box_force": _norm((b.force_hand_L)) + _norm((b.force_hand_R)),
        "hand_roll": _hand_roll_cost(world),
    }
    return RewardBreakdown(terms=terms)


def gait_reward(world: World, cmd: WalkCommand, gait_clock: float,
                action: Action, prev_action: Action) -> RewardBreakdown:
    """Reconstructed clock-based locomotion reward: alternating stance/swing
    costs, command tracking, posture, regularizers, and the hand terms."""
    r = world.robot
    yaw = quat_yaw(r.base_quat)
    vel_base = yaw_into(yaw, r.base_linvel[:2])
    # first half-cycle: left foot stance / right swing, then swapped
    if gait_clock < 0.5:
        swing_contact = float(r.foot_contact_R)
        stance_vel = _norm((r.foot_vel_L))
    else:
        swing_contact = float(r.foot_contact_L)
        stance_vel = _norm((r.foot_vel_R))
    hand_l = np.concatenate([yaw_into(yaw, (r.hand_pos_L - r.base_pos)[:2]),
                             (r.hand_pos_L - r.base_pos)[2:]])
    hand_r = np.concatenate([yaw_into(yaw, (r.hand_pos_R - r.base_pos)[:2]),
                             (r.hand_pos_R - r.base_pos)[2:]])
    mirror_r = hand_r * np.array([1.0, -1.0, 1.0])
    terms = {
        "cmd_vel": _norm((vel_base - np.array([cmd.vx, cmd.vy]))),
        "cmd_yaw": abs(float(r.base_angvel[2]) - cmd.yaw_rate),
        "swing_contact": swing_contact,
        "stance_foot_vel": stance_vel,
        "height": abs(float(r.base_pos[2]) - STAND_HEIGHT),
        "base_orient": _rel_quat_cost(r.base_quat, yaw),  # level torso, heading-free
        "foot_orient": _foot_orient_cost(world, ref_yaw=yaw),
        "hand_sym": _norm((hand_l - mirror_r)),
        "hand_front": max(0.0, 0.05 - float(hand_l[0])) + max(0.0, 0.05 - float(hand_r[0])),
    }
    terms.update(_reg_terms(world, action, prev_action))
    return RewardBreakdown(terms=terms,
                           sparse_penalty=_sparse_events(world, include_hand_speed=False))


def compose(breakdown: RewardBreakdown, weights: RewardWeights) -> float:
    total = 0.0
    for name, cost in breakdown.terms.items():
        if not np.isfinite(cost):
            raise ValueError(f"non-finite reward term {name!r}")
        total += weights[name] * np.exp(-cost)
    return float(total + breakdown.contact_bonus + breakdown.sparse_penalty)


def is_fallen(world: World, pitch_only: bool = False) -> Optional[str]:
    if float(world.robot.base_pos[2]) < TORSO_MIN_HEIGHT:
        return TORSO_LOW
    roll, pitch = tilt_angles(world.robot.base_quat)
    if abs(pitch) > TORSO_MAX_PITCH:
        return TORSO_PITCH
    if not pitch_only and abs(roll) > TORSO_MAX_PITCH:
        return TORSO_ROLL
    return None


def check_termination(world: World, clock: PhaseClock, skill: SkillId) -> Optional[str]:
    """First matching termination reason, in a fixed order, or None.

    For ground-spawned boxes (no table in the world) the ground plays the
    support-surface role: resting there is the legal starting state, and
    the late-lift check watches ground contact instead of table contact.
    """
    r = world.robot
    if skill == SkillId.PickUp:
        if float(r.base_pos[2]) < TORSO_MIN_HEIGHT:
            return TORSO_LOW
        _, pitch = tilt_angles(r.base_quat)
        if abs(pitch) > TORSO_MAX_PITCH:
            return TORSO_PITCH
        if not (r.foot_contact_L and r.foot_contact_R):
            return FOOT_OFF_GROUND
        if world.robot_table_contact:
            return ROBOT_TABLE_CONTACT
        elevated = float(world.table_pose[2]) > 0.0
        if elevated and world.box_ground_streak >= BOX_GROUND_DEBOUNCE:
            return BOX_ON_GROUND
        if clock.t >= clock.t_contact + CONTACT_GRACE_STEPS and not (
                world.box.contact_hand_L and world.box.contact_hand_R):
            return MISSED_CONTACT
        on_support = world.box.contact_table if elevated else world.box.contact_ground
        if clock.t >= clock.t_lift + CONTACT_GRACE_STEPS and on_support:
            return MISSED_LIFT
        return None
    if skill in (SkillId.Stand, SkillId.StandWithBox):
        fallen = is_fallen(world)
        if fallen:
            return fallen
        if clock.t >= STAND_FOOT_GRACE_STEPS and not (r.foot_contact_L and r.foot_contact_R):
            return FOOT_OFF_GROUND
        if skill == SkillId.StandWithBox and not (
                world.box.contact_hand_L and world.box.contact_hand_R):
            return LOST_BOX
        return None
    if skill in (SkillId.Walk, SkillId.WalkWithBox):
        fallen = is_fallen(world)
        if fallen:
            return fallen
        if skill == SkillId.WalkWithBox and not (
                world.box.contact_hand_L and world.box.contact_hand_R):
            return LOST_BOX
        return None
    raise ValueError(f"unknown skill {skill}")
