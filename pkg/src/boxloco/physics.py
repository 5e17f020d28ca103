"""Reduced-order world: construction, 50 Hz stepping, contact queries.

The heavy lifting happens in the jitted kernel (`_kernel`); this module
owns the typed surface. Worlds are immutable: `step_policy_tick` returns a
new World built from a stepped copy of the flat kernel state.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernel as K
from .geom import (quat_from_yaw, quat_normalize, quat_rotate, quat_to_rpy, quat_yaw,
                   tilt_angles, yaw_into, yaw_outof)
from .world import BoxState, RobotState, N_ACTUATORS

POLICY_DT = 0.02
BASE_HEIGHT = 0.9
ARM_TARGET_L = np.array([0.15, 0.3, -0.1])
ARM_TARGET_R = np.array([0.15, -0.3, -0.1])
# hands spawn slightly above the standing-skill arm targets so they clear
# the tabletop (and its collision apron) of table-height boxes
SPAWN_HAND_LIFT = 0.05

# base translation 400/20, base rotation 200/10; hands 400/20 so that a
# clamped relative action (|a| <= 0.3) can express the ~60 N/hand grip the
# top of the training mass range needs at mu = 0.8
DEFAULT_KP = np.array([400.0, 400.0, 400.0, 200.0, 200.0, 200.0,
                       400.0, 400.0, 400.0, 400.0, 400.0, 400.0])
DEFAULT_KD = np.array([20.0, 20.0, 20.0, 10.0, 10.0, 10.0,
                       20.0, 20.0, 20.0, 20.0, 20.0, 20.0])


class NumericalFault(RuntimeError):
    """NaN/Inf appeared in the simulation state."""


class SpawnError(ValueError):
    """Scenario produced an invalid initial world."""


@dataclass(frozen=True)
class WorldParams:
    gravity: float = 9.81
    dt_inner: float = 1.0 / 2000.0
    substeps_per_policy_tick: int = 40
    contact_stiffness: float = 20000.0   # k_n, N/m
    contact_damping: float = 100.0       # d_n, N*s/m
    friction_mu: float = 0.8
    tangent_rate_gain: float = 500.0     # k_t, N*s/m (regularized Coulomb)
    pd_kp: np.ndarray = field(default_factory=lambda: DEFAULT_KP.copy())
    pd_kd: np.ndarray = field(default_factory=lambda: DEFAULT_KD.copy())
    hand_mass: float = 2.0
    torso_mass: float = 30.0
    table_height: float = 0.8
    support_polygon_halfwidths: np.ndarray = field(default_factory=lambda: np.array([0.13, 0.07]))
    torso_inertia: np.ndarray = field(default_factory=lambda: np.array([1.5, 1.5, 0.8]))
    com_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gait_period: float = 0.8
    swing_height: float = 0.05
    stance_width: float = 0.385
    double_support_fraction: float = 0.2
    table_halfextents: np.ndarray = field(default_factory=lambda: np.array([0.35, 0.35]))

    def __post_init__(self):
        object.__setattr__(self, "pd_kp", np.asarray(self.pd_kp, dtype=float))
        object.__setattr__(self, "pd_kd", np.asarray(self.pd_kd, dtype=float))
        for name in ("support_polygon_halfwidths", "table_halfextents"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("torso_inertia", "com_offset"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if abs(self.dt_inner * self.substeps_per_policy_tick - POLICY_DT) > 1e-12:
            raise ValueError("dt_inner * substeps_per_policy_tick must equal 0.02 s")
        for name in ("contact_stiffness", "contact_damping", "hand_mass", "torso_mass"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def replace(self, **kwargs) -> "WorldParams":
        return dataclasses.replace(self, **kwargs)


@dataclass(frozen=True)
class World:
    robot: RobotState
    box: BoxState
    table_pose: np.ndarray      # (x, y, top height, yaw); top height 0 = no table
    params: WorldParams
    time: float
    ref_yaw: float
    sim: np.ndarray = field(repr=False)          # flat kernel state
    params_arr: np.ndarray = field(repr=False)   # flat kernel params
    last_contacts: np.ndarray = field(repr=False)  # (NREC, 4) from the last tick

    @property
    def self_collision(self) -> bool:
        return self.sim[K.S_SELF_COLL] > 0.5

    @property
    def robot_table_contact(self) -> bool:
        return self.sim[K.S_ROBOT_TABLE] > 0.5

    @property
    def box_ground_streak(self) -> int:
        return int(self.sim[K.S_GROUND_STREAK])

    @property
    def gait_phase(self) -> float:
        return float(self.sim[K.S_GAIT_PHASE])

    @property
    def ref_origin(self) -> np.ndarray:
        return self.sim[K.S_REF_ORIGIN:K.S_REF_ORIGIN + 2].copy()

    def ref_to_world(self, p: np.ndarray) -> np.ndarray:
        """Scenario-frame point (xy relative to spawn, z absolute) to world."""
        p = np.asarray(p, dtype=float)
        xy = self.ref_origin + yaw_outof(self.ref_yaw, p[:2])
        return np.array([xy[0], xy[1], p[2]])

    def world_to_ref(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        xy = yaw_into(self.ref_yaw, p[:2] - self.ref_origin)
        return np.array([xy[0], xy[1], p[2]])

    def with_prev_action(self, action: np.ndarray) -> "World":
        robot = dataclasses.replace(self.robot, prev_action=np.asarray(action, dtype=float))
        return dataclasses.replace(self, robot=robot)

    def with_gait(self, active: bool, vx: float = 0.0, vy: float = 0.0,
                  yaw_rate: float = 0.0, phase: Optional[float] = None) -> "World":
        sim = self.sim.copy()
        was_active = sim[K.S_GAIT_ACTIVE] > 0.5
        sim[K.S_GAIT_ACTIVE] = 1.0 if active else 0.0
        sim[K.S_GAIT_CMD:K.S_GAIT_CMD + 3] = (vx, vy, yaw_rate)
        if active and (not was_active or phase is not None):
            sim[K.S_GAIT_PHASE] = 0.0 if phase is None else float(phase) % 1.0
            sim[K.S_SWING_ANCHOR_L:K.S_SWING_ANCHOR_L + 3] = sim[K.S_FOOTL_POS:K.S_FOOTL_POS + 3]
            sim[K.S_SWING_ANCHOR_R:K.S_SWING_ANCHOR_R + 3] = sim[K.S_FOOTR_POS:K.S_FOOTR_POS + 3]
        return _world_from_sim(sim, self.params, self.params_arr, self.table_pose,
                               self.box.dims, self.box.mass, self.robot.prev_action,
                               self.last_contacts)

    def with_updates(self, robot: Optional[RobotState] = None,
                     box: Optional[BoxState] = None) -> "World":
        """Re-encode modified robot/box states into the kernel state.

        Intended for tests and dataset restoration; derived quantities
        (actuator coordinates) are recomputed from the encoded fields.
        """
        sim = self.sim.copy()
        params_arr = self.params_arr.copy()
        if robot is not None:
            _encode_robot(sim, robot)
        if box is not None:
            _encode_box(sim, box)
            params_arr[K.P_BOX_DIMS:K.P_BOX_DIMS + 3] = box.dims
            params_arr[K.P_BOX_MASS] = box.mass
        prev = (robot or self.robot).prev_action
        return _world_from_sim(sim, self.params, params_arr, self.table_pose,
                               (box or self.box).dims, (box or self.box).mass,
                               prev, self.last_contacts)

    def with_flags(self, robot_table: Optional[bool] = None,
                   ground_streak: Optional[int] = None,
                   self_collision: Optional[bool] = None) -> "World":
        """Override latched event flags (test fixtures and diagnostics)."""
        sim = self.sim.copy()
        if robot_table is not None:
            sim[K.S_ROBOT_TABLE] = 1.0 if robot_table else 0.0
        if ground_streak is not None:
            sim[K.S_GROUND_STREAK] = float(ground_streak)
        if self_collision is not None:
            sim[K.S_SELF_COLL] = 1.0 if self_collision else 0.0
        return _world_from_sim(sim, self.params, self.params_arr, self.table_pose,
                               self.box.dims, self.box.mass, self.robot.prev_action,
                               self.last_contacts)

    def with_ref(self, yaw: float, origin: Sequence[float]) -> "World":
        """Re-anchor the scenario reference frame (used at skill-phase
        boundaries in the full task)."""
        sim = self.sim.copy()
        sim[K.S_REF_YAW] = float(yaw)
        sim[K.S_REF_ORIGIN:K.S_REF_ORIGIN + 2] = np.asarray(origin, dtype=float)
        return _world_from_sim(sim, self.params, self.params_arr, self.table_pose,
                               self.box.dims, self.box.mass, self.robot.prev_action,
                               self.last_contacts)

    def with_table(self, table_pose: Sequence[float]) -> "World":
        tp = np.asarray(table_pose, dtype=float)
        params_arr = self.params_arr.copy()
        params_arr[K.P_TABLE_X] = tp[0]
        params_arr[K.P_TABLE_Y] = tp[1]
        params_arr[K.P_TABLE_H] = tp[2]
        params_arr[K.P_TABLE_YAW] = tp[3]
        return _world_from_sim(self.sim.copy(), self.params, params_arr, tp,
                               self.box.dims, self.box.mass, self.robot.prev_action,
                               self.last_contacts)


@dataclass(frozen=True)
class ContactForce:
    pair: str
    normal: float
    tangent: np.ndarray  # 2-vector in the pair's tangent plane
    penetration: float


def _params_array(p: WorldParams, box_dims, box_mass, table_pose) -> np.ndarray:
    arr = np.zeros(K.NPARAMS)
    arr[K.P_GRAVITY] = p.gravity
    arr[K.P_DT] = p.dt_inner
    arr[K.P_KN] = p.contact_stiffness
    arr[K.P_DN] = p.contact_damping
    arr[K.P_MU] = p.friction_mu
    arr[K.P_KT] = p.tangent_rate_gain
    arr[K.P_HAND_MASS] = p.hand_mass
    arr[K.P_TORSO_MASS] = p.torso_mass
    arr[K.P_TABLE_X] = table_pose[0]
    arr[K.P_TABLE_Y] = table_pose[1]
    arr[K.P_TABLE_H] = table_pose[2]
    arr[K.P_TABLE_YAW] = table_pose[3]
    arr[K.P_TABLE_HEX] = p.table_halfextents[0]
    arr[K.P_TABLE_HEY] = p.table_halfextents[1]
    arr[K.P_SUP_HX] = p.support_polygon_halfwidths[0]
    arr[K.P_SUP_HY] = p.support_polygon_halfwidths[1]
    arr[K.P_KP:K.P_KP + 12] = p.pd_kp
    arr[K.P_KD:K.P_KD + 12] = p.pd_kd
    arr[K.P_BOX_DIMS:K.P_BOX_DIMS + 3] = box_dims
    arr[K.P_BOX_MASS] = box_mass
    arr[K.P_TORSO_I:K.P_TORSO_I + 3] = p.torso_inertia
    arr[K.P_COM_OFF:K.P_COM_OFF + 3] = p.com_offset
    arr[K.P_GAIT_PERIOD] = p.gait_period
    arr[K.P_SWING_H] = p.swing_height
    arr[K.P_STANCE_WIDTH] = p.stance_width
    arr[K.P_DSP_FRAC] = p.double_support_fraction
    return arr


def _actuator_coords(sim: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Current actuator positions/velocities in the reduced coordinates."""
    favg = 0.5 * (sim[K.S_FOOTL_POS:K.S_FOOTL_POS + 2] + sim[K.S_FOOTR_POS:K.S_FOOTR_POS + 2])
    psi_f = np.arctan2(np.sin(sim[K.S_FOOT_YAW]) + np.sin(sim[K.S_FOOT_YAW + 1]),
                       np.cos(sim[K.S_FOOT_YAW]) + np.cos(sim[K.S_FOOT_YAW + 1]))
    quat = sim[K.S_BASE_QUAT:K.S_BASE_QUAT + 4]
    yaw = quat_yaw(quat)
    roll, pitch = tilt_angles(quat)
    pos = np.empty(N_ACTUATORS)
    vel = np.empty(N_ACTUATORS)
    pos[0:2] = yaw_into(psi_f, sim[K.S_BASE_POS:K.S_BASE_POS + 2] - favg)
    pos[2] = sim[K.S_BASE_POS + 2]
    pos[3] = roll
    pos[4] = pitch
    pos[5] = np.arctan2(np.sin(yaw - psi_f), np.cos(yaw - psi_f))
    vel[0:2] = yaw_into(psi_f, sim[K.S_BASE_LV:K.S_BASE_LV + 2])
    vel[2] = sim[K.S_BASE_LV + 2]
    vel[3:5] = yaw_into(yaw, sim[K.S_BASE_AV:K.S_BASE_AV + 2])
    vel[5] = sim[K.S_BASE_AV + 2]
    for h, (pos_off, vel_off) in enumerate(((K.S_HANDL_POS, K.S_HANDL_VEL),
                                            (K.S_HANDR_POS, K.S_HANDR_VEL))):
        rel = sim[pos_off:pos_off + 3] - sim[K.S_BASE_POS:K.S_BASE_POS + 3]
        relv = sim[vel_off:vel_off + 3] - sim[K.S_BASE_LV:K.S_BASE_LV + 3]
        pos[6 + 3 * h:8 + 3 * h] = yaw_into(yaw, rel[:2])
        pos[8 + 3 * h] = rel[2]
        vel[6 + 3 * h:8 + 3 * h] = yaw_into(yaw, relv[:2])
        vel[8 + 3 * h] = relv[2]
    return pos, vel


def _extract_robot(sim: np.ndarray, prev_action: np.ndarray) -> RobotState:
    support = sim[K.S_SUPPORT] > 0.5
    pos, vel = _actuator_coords(sim)
    return RobotState(
        base_pos=sim[K.S_BASE_POS:K.S_BASE_POS + 3].copy(),
        base_quat=quat_normalize(sim[K.S_BASE_QUAT:K.S_BASE_QUAT + 4].copy()),
        base_linvel=sim[K.S_BASE_LV:K.S_BASE_LV + 3].copy(),
        base_angvel=sim[K.S_BASE_AV:K.S_BASE_AV + 3].copy(),
        hand_pos_L=sim[K.S_HANDL_POS:K.S_HANDL_POS + 3].copy(),
        hand_pos_R=sim[K.S_HANDR_POS:K.S_HANDR_POS + 3].copy(),
        hand_vel_L=sim[K.S_HANDL_VEL:K.S_HANDL_VEL + 3].copy(),
        hand_vel_R=sim[K.S_HANDR_VEL:K.S_HANDR_VEL + 3].copy(),
        foot_pos_L=sim[K.S_FOOTL_POS:K.S_FOOTL_POS + 3].copy(),
        foot_pos_R=sim[K.S_FOOTR_POS:K.S_FOOTR_POS + 3].copy(),
        foot_contact_L=bool(sim[K.S_FOOT_STANCE] > 0.5 and support),
        foot_contact_R=bool(sim[K.S_FOOT_STANCE + 1] > 0.5 and support),
        foot_vel_L=sim[K.S_FOOTL_VEL:K.S_FOOTL_VEL + 3].copy(),
        foot_vel_R=sim[K.S_FOOTR_VEL:K.S_FOOTR_VEL + 3].copy(),
        cop=sim[K.S_COP:K.S_COP + 2].copy(),
        actuator_pos=pos,
        actuator_vel=vel,
        actuator_force=sim[K.S_ACT_FORCE:K.S_ACT_FORCE + 12].copy(),
        prev_action=np.asarray(prev_action, dtype=float).copy(),
    )


def _extract_box(sim: np.ndarray, dims, mass) -> BoxState:
    table = bool(sim[K.S_BOX_CONTACT + 2] > 0.5)
    return BoxState(
        pos=sim[K.S_BOX_POS:K.S_BOX_POS + 3].copy(),
        quat=quat_normalize(sim[K.S_BOX_QUAT:K.S_BOX_QUAT + 4].copy()),
        linvel=sim[K.S_BOX_LV:K.S_BOX_LV + 3].copy(),
        angvel=sim[K.S_BOX_AV:K.S_BOX_AV + 3].copy(),
        linacc=sim[K.S_BOX_ACC:K.S_BOX_ACC + 3].copy(),
        dims=np.asarray(dims, dtype=float).copy(),
        mass=float(mass),
        contact_hand_L=bool(sim[K.S_BOX_CONTACT] > 0.5),
        contact_hand_R=bool(sim[K.S_BOX_CONTACT + 1] > 0.5),
        contact_table=table,
        contact_ground=bool(sim[K.S_BOX_CONTACT + 3] > 0.5),
        force_hand_L=sim[K.S_BOX_FHL:K.S_BOX_FHL + 3].copy(),
        force_hand_R=sim[K.S_BOX_FHR:K.S_BOX_FHR + 3].copy(),
        force_table=sim[K.S_BOX_FTABLE:K.S_BOX_FTABLE + 3].copy() if table else np.zeros(3),
    )


def _encode_robot(sim: np.ndarray, r: RobotState) -> None:
    sim[K.S_BASE_POS:K.S_BASE_POS + 3] = r.base_pos
    sim[K.S_BASE_QUAT:K.S_BASE_QUAT + 4] = r.base_quat
    sim[K.S_BASE_LV:K.S_BASE_LV + 3] = r.base_linvel
    sim[K.S_BASE_AV:K.S_BASE_AV + 3] = r.base_angvel
    sim[K.S_HANDL_POS:K.S_HANDL_POS + 3] = r.hand_pos_L
    sim[K.S_HANDL_VEL:K.S_HANDL_VEL + 3] = r.hand_vel_L
    sim[K.S_HANDR_POS:K.S_HANDR_POS + 3] = r.hand_pos_R
    sim[K.S_HANDR_VEL:K.S_HANDR_VEL + 3] = r.hand_vel_R
    sim[K.S_FOOTL_POS:K.S_FOOTL_POS + 3] = r.foot_pos_L
    sim[K.S_FOOTR_POS:K.S_FOOTR_POS + 3] = r.foot_pos_R
    sim[K.S_FOOTL_VEL:K.S_FOOTL_VEL + 3] = r.foot_vel_L
    sim[K.S_FOOTR_VEL:K.S_FOOTR_VEL + 3] = r.foot_vel_R
    sim[K.S_FOOT_STANCE] = 1.0 if r.foot_contact_L else 0.0
    sim[K.S_FOOT_STANCE + 1] = 1.0 if r.foot_contact_R else 0.0
    sim[K.S_SUPPORT] = 1.0 if (r.foot_contact_L or r.foot_contact_R) else 0.0
    sim[K.S_COP:K.S_COP + 2] = r.cop
    sim[K.S_ACT_FORCE:K.S_ACT_FORCE + 12] = r.actuator_force


def _encode_box(sim: np.ndarray, b: BoxState) -> None:
    sim[K.S_BOX_POS:K.S_BOX_POS + 3] = b.pos
    sim[K.S_BOX_QUAT:K.S_BOX_QUAT + 4] = b.quat
    sim[K.S_BOX_LV:K.S_BOX_LV + 3] = b.linvel
    sim[K.S_BOX_AV:K.S_BOX_AV + 3] = b.angvel
    sim[K.S_BOX_ACC:K.S_BOX_ACC + 3] = b.linacc
    sim[K.S_BOX_CONTACT] = 1.0 if b.contact_hand_L else 0.0
    sim[K.S_BOX_CONTACT + 1] = 1.0 if b.contact_hand_R else 0.0
    sim[K.S_BOX_CONTACT + 2] = 1.0 if b.contact_table else 0.0
    sim[K.S_BOX_CONTACT + 3] = 1.0 if b.contact_ground else 0.0
    sim[K.S_BOX_FHL:K.S_BOX_FHL + 3] = b.force_hand_L
    sim[K.S_BOX_FHR:K.S_BOX_FHR + 3] = b.force_hand_R
    sim[K.S_BOX_FTABLE:K.S_BOX_FTABLE + 3] = b.force_table


def _world_from_sim(sim, params, params_arr, table_pose, box_dims, box_mass,
                    prev_action, last_contacts) -> World:
    return World(
        robot=_extract_robot(sim, prev_action),
        box=_extract_box(sim, box_dims, box_mass),
        table_pose=np.asarray(table_pose, dtype=float),
        params=params,
        time=float(sim[K.S_TIME]),
        ref_yaw=float(sim[K.S_REF_YAW]),
        sim=sim,
        params_arr=params_arr,
        last_contacts=last_contacts,
    )


def neutral_setpoints() -> np.ndarray:
    lift = np.array([0.0, 0.0, SPAWN_HAND_LIFT])
    return np.concatenate([[0.0, 0.0, BASE_HEIGHT, 0.0, 0.0, 0.0],
                           ARM_TARGET_L + lift, ARM_TARGET_R + lift])


def make_neutral_world(params: Optional[WorldParams] = None, heading: float = 0.0,
                       origin: Sequence[float] = (0.0, 0.0),
                       box_pos: Optional[Sequence[float]] = None,
                       box_yaw: float = 0.0,
                       box_dims: Sequence[float] = (0.3, 0.3, 0.3),
                       box_mass: float = 1.0,
                       table_top: float = 0.0) -> World:
    """Robot in its neutral stance; box placed explicitly or parked far away.

    `box_pos` is the box *center* in world coordinates. `table_top` > 0 puts
    a table of that height under the box footprint.
    """
    params = params or WorldParams()
    origin = np.asarray(origin, dtype=float)
    sim = np.zeros(K.NSTATE)
    quat = quat_from_yaw(heading)
    base = np.array([origin[0], origin[1], BASE_HEIGHT])
    sim[K.S_BASE_POS:K.S_BASE_POS + 3] = base
    sim[K.S_BASE_QUAT:K.S_BASE_QUAT + 4] = quat
    for off, arm in ((K.S_HANDL_POS, ARM_TARGET_L), (K.S_HANDR_POS, ARM_TARGET_R)):
        world_arm = np.concatenate([yaw_outof(heading, arm[:2]),
                                    arm[2:] + SPAWN_HAND_LIFT])
        sim[off:off + 3] = base + world_arm
    # feet straddle the static center of mass so the neutral pose is balanced
    arm_x = ARM_TARGET_L[0]
    com_x = 2.0 * params.hand_mass * arm_x / (params.torso_mass + 2.0 * params.hand_mass)
    for off, side in ((K.S_FOOTL_POS, 1.0), (K.S_FOOTR_POS, -1.0)):
        local = np.array([com_x, side * 0.5 * params.stance_width])
        sim[off:off + 2] = origin + yaw_outof(heading, local)
        sim[off + 2] = 0.0
    sim[K.S_FOOT_STANCE:K.S_FOOT_STANCE + 2] = 1.0
    sim[K.S_FOOT_YAW:K.S_FOOT_YAW + 2] = heading
    favg = 0.5 * (sim[K.S_FOOTL_POS:K.S_FOOTL_POS + 2] + sim[K.S_FOOTR_POS:K.S_FOOTR_POS + 2])
    sim[K.S_COP:K.S_COP + 2] = favg
    sim[K.S_SUPPORT] = 1.0
    sim[K.S_SWING_ANCHOR_L:K.S_SWING_ANCHOR_L + 3] = sim[K.S_FOOTL_POS:K.S_FOOTL_POS + 3]
    sim[K.S_SWING_ANCHOR_R:K.S_SWING_ANCHOR_R + 3] = sim[K.S_FOOTR_POS:K.S_FOOTR_POS + 3]
    sim[K.S_REF_YAW] = heading
    sim[K.S_REF_ORIGIN:K.S_REF_ORIGIN + 2] = origin

    box_dims = np.asarray(box_dims, dtype=float)
    if box_pos is None:
        box_center = np.array([50.0, 50.0, 0.5 * box_dims[2]])
        table_pose = np.array([0.0, 0.0, 0.0, 0.0])
    else:
        box_center = np.asarray(box_pos, dtype=float)
        if table_top > 0.0:
            table_pose = np.array([box_center[0], box_center[1], table_top, box_yaw])
        else:
            table_pose = np.array([0.0, 0.0, 0.0, 0.0])
    sim[K.S_BOX_POS:K.S_BOX_POS + 3] = box_center
    sim[K.S_BOX_QUAT:K.S_BOX_QUAT + 4] = quat_from_yaw(box_yaw)

    params_arr = _params_array(params, box_dims, box_mass, table_pose)
    rec = np.zeros((K.NREC, 4))
    out = np.zeros(14)
    K.contact_pass(sim, params_arr, rec, out)
    sim[K.S_BOX_CONTACT + 2] = out[12]
    sim[K.S_BOX_CONTACT + 3] = out[13]
    if out[12] > 0.5:
        sim[K.S_BOX_FTABLE + 2] = float(np.sum(rec[K.REC_TABLE:K.REC_TABLE + 8, 0]))
        sim[K.S_BOX_FTABLE] = float(np.sum(rec[K.REC_TABLE:K.REC_TABLE + 8, 1]))
        sim[K.S_BOX_FTABLE + 1] = float(np.sum(rec[K.REC_TABLE:K.REC_TABLE + 8, 2]))
    return _world_from_sim(sim, params, params_arr, table_pose, box_dims, box_mass,
                           np.zeros(N_ACTUATORS), rec)


def spawn_world(scenario, params: Optional[WorldParams] = None, heading: float = 0.0,
                origin: Sequence[float] = (0.0, 0.0)) -> World:
    """Construct the initial world for a sampled scenario.

    Scenario coordinates are relative to the robot: the robot spawns at
    `origin` facing `heading`, and the whole scenario is carried along.
    The scenario's box z is the *bottom* height: 0 means on the ground,
    anything higher puts a table of exactly that height underneath.
    """
    params = params or WorldParams()
    if scenario.dynamics_scales:
        params = apply_dynamics_scales(params, scenario.dynamics_scales)
    origin = np.asarray(origin, dtype=float)
    has_box = scenario.box_pos is not None
    if not has_box:
        return make_neutral_world(params, heading, origin)

    box_pos = np.asarray(scenario.box_pos, dtype=float)
    dims = np.asarray(scenario.box_dims, dtype=float)
    bottom = float(box_pos[2])
    if bottom < 0:
        raise SpawnError("box bottom below ground")
    # the supporting table hugs the box footprint so every corner lands on it
    half_diag = 0.5 * float(np.hypot(dims[0], dims[1]))
    params = params.replace(table_halfextents=np.array([half_diag + 0.02, half_diag + 0.02]))
    # settle the box at its static penalty-contact equilibrium
    sink = scenario.box_mass * params.gravity / (4.0 * params.contact_stiffness)
    if sink > 0.005:
        raise SpawnError("initial interpenetration exceeds 5 mm")
    center_xy = origin + yaw_outof(heading, box_pos[:2])
    center = np.array([center_xy[0], center_xy[1], bottom + 0.5 * dims[2] - sink])
    world = make_neutral_world(
        params, heading, origin,
        box_pos=center,
        box_yaw=heading + scenario.box_yaw,
        box_dims=dims,
        box_mass=scenario.box_mass,
        table_top=bottom if bottom > 0 else 0.0,
    )
    # a hand that would start just under (or flush with) the tabletop is
    # lifted onto it so spawns never begin in table contact
    if bottom > 0:
        r = world.robot
        nudged = {}
        for name, pos in (("hand_pos_L", r.hand_pos_L), ("hand_pos_R", r.hand_pos_R)):
            near_top = (K.hand_in_table_apron(world.params_arr, pos[0], pos[1], pos[2])
                        or (abs(pos[2] - bottom) < 0.02
                            and K.hand_in_table_apron(world.params_arr, pos[0], pos[1],
                                                      bottom - 0.01)))
            if near_top:
                new = pos.copy()
                new[2] = bottom + 0.02
                nudged[name] = new
        if nudged:
            world = world.with_updates(robot=dataclasses.replace(r, **nudged))
    if world.robot_table_contact or _robot_probes_in_table(world):
        raise SpawnError("robot starts in contact with the table")
    # sanity: no deep interpenetration anywhere at spawn
    for c in contact_forces(world):
        if c.penetration > 0.005:
            raise SpawnError(f"initial interpenetration {c.penetration:.4f} m on {c.pair}")
    return world


def _robot_probes_in_table(world: World) -> bool:
    pa = world.params_arr
    r = world.robot
    for p in (r.hand_pos_L, r.hand_pos_R):
        if K.hand_in_table_apron(pa, p[0], p[1], p[2]):
            return True
    for p in (r.base_pos, r.base_pos - np.array([0.0, 0.0, K.TORSO_LOWER_REACH])):
        if K._point_in_table(pa, p[0], p[1], p[2]):
            return True
    return False


def apply_dynamics_scales(params: WorldParams, scales: dict) -> WorldParams:
    """Dynamics-randomization multipliers/offsets onto the nominal params."""
    p = params
    if "body_mass" in scales:
        m = float(scales["body_mass"])
        p = p.replace(torso_mass=p.torso_mass * m, hand_mass=p.hand_mass * m)
    if "joint_damping" in scales:
        p = p.replace(pd_kd=p.pd_kd * float(scales["joint_damping"]))
    if "ground_friction" in scales:
        p = p.replace(friction_mu=p.friction_mu * float(scales["ground_friction"]))
    if "com_offset" in scales:
        p = p.replace(com_offset=np.asarray(scales["com_offset"], dtype=float))
    return p


_SCRATCH = np.zeros(48)


def step_policy_tick(world: World, setpoints: np.ndarray,
                     prev_action: Optional[np.ndarray] = None) -> World:
    """Advance one 50 Hz tick (40 PD/contact substeps at 2 kHz). The new
    world's prev_action can be stamped in the same pass."""
    sp = np.asarray(setpoints, dtype=float)
    if sp.shape != (N_ACTUATORS,):
        raise ValueError(f"setpoints must have shape ({N_ACTUATORS},)")
    if not np.all(np.isfinite(sp)):
        raise NumericalFault("non-finite setpoints")
    sim = world.sim.copy()
    rec = np.zeros((K.NREC, 4))
    K.run_policy_tick(sim, world.params_arr, sp, world.params.substeps_per_policy_tick,
                      rec, _SCRATCH.copy())
    if not np.all(np.isfinite(sim)):
        raise NumericalFault("non-finite simulation state")
    prev = world.robot.prev_action if prev_action is None else prev_action
    return _world_from_sim(sim, world.params, world.params_arr, world.table_pose,
                           world.box.dims, world.box.mass, prev, rec)


def step_policy_tick_recorded(world: World, setpoints: np.ndarray) -> tuple[World, np.ndarray]:
    """step_policy_tick variant returning every substep's contact records
    (shape: substeps x record slots x [N, t0, t1, depth])."""
    sp = np.asarray(setpoints, dtype=float)
    sim = world.sim.copy()
    n = world.params.substeps_per_policy_tick
    recs = np.zeros((n, K.NREC, 4))
    K.run_policy_tick_recorded(sim, world.params_arr, sp, n, recs, _SCRATCH.copy())
    if not np.all(np.isfinite(sim)):
        raise NumericalFault("non-finite simulation state")
    new = _world_from_sim(sim, world.params, world.params_arr, world.table_pose,
                          world.box.dims, world.box.mass, world.robot.prev_action,
                          recs[-1].copy())
    return new, recs


def step_substeps(world: World, setpoints: np.ndarray, n: int) -> tuple[World, np.ndarray]:
    """Advance n raw 2 kHz substeps (diagnostics/tests); returns the new
    world and the last substep's contact records."""
    sp = np.asarray(setpoints, dtype=float)
    sim = world.sim.copy()
    rec = np.zeros((K.NREC, 4))
    scratch = _SCRATCH.copy()
    for _ in range(n):
        K.substep(sim, world.params_arr, sp, rec, scratch)
    if not np.all(np.isfinite(sim)):
        raise NumericalFault("non-finite simulation state")
    return _world_from_sim(sim, world.params, world.params_arr, world.table_pose,
                           world.box.dims, world.box.mass, world.robot.prev_action,
                           rec), rec


_PAIR_SLOTS = (
    ("hand_L-box", K.REC_HAND_L, 1),
    ("hand_R-box", K.REC_HAND_R, 1),
    ("box-table", K.REC_TABLE, 8),
    ("box-ground", K.REC_GROUND, 8),
    ("foot_L-ground", K.REC_FOOT_L, 1),
    ("foot_R-ground", K.REC_FOOT_R, 1),
)


def _aggregate(rec: np.ndarray) -> list[ContactForce]:
    forces = []
    for pair, start, count in _PAIR_SLOTS:
        block = rec[start:start + count]
        normal = float(np.sum(block[:, 0]))
        tangent = np.array([float(np.sum(block[:, 1])), float(np.sum(block[:, 2]))])
        pen = float(np.max(block[:, 3])) if count else 0.0
        forces.append(ContactForce(pair, normal, tangent, pen))
    return forces


def contact_forces(world: World) -> list[ContactForce]:
    """Penalty contact forces for every candidate pair at the current state.

    Box pairs are evaluated fresh; the foot-ground entries report the
    support reaction realized during the most recent stepped tick.
    """
    rec = np.zeros((K.NREC, 4))
    out = np.zeros(14)
    K.contact_pass(world.sim.copy(), world.params_arr, rec, out)
    rec[K.REC_FOOT_L] = world.last_contacts[K.REC_FOOT_L]
    rec[K.REC_FOOT_R] = world.last_contacts[K.REC_FOOT_R]
    return _aggregate(rec)
