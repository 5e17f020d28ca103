"""Skill episodes: scenario spawn, command construction, stepping, rewards,
termination, and the 10-step action warmup when resuming from a dataset
state. Shared by the trainer, the evaluator, transitions, and teleop.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rewards as R
from . import scenarios as scn
from .geom import quat_from_yaw, wrap_angle
from .physics import (World, WorldParams, spawn_world, make_neutral_world,
                      step_policy_tick, neutral_setpoints, NumericalFault, SpawnError)
from .policy import apply_action
from .world import (Action, ActionMode, BoxObservation, BoxState, Command, PhaseClock,
                    PickUpCommand, SkillId, StandBoxCommand, StandCommand,
                    WalkBoxCommand, WalkCommand, assemble_observation, N_ACTUATORS)

TRANSITION_BLEND_STEPS = 10
CARRY_GRIP_MARGIN = 1.5


def blend_setpoints(old: np.ndarray, new: np.ndarray, k: int) -> np.ndarray:
    """Linear action/setpoint interpolation over the 10-step warmup."""
    if k < 0 or k > TRANSITION_BLEND_STEPS:
        raise ValueError(f"blend step {k} outside [0, {TRANSITION_BLEND_STEPS}]")
    a = k / TRANSITION_BLEND_STEPS
    return (1.0 - a) * np.asarray(old, float) + a * np.asarray(new, float)


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    terminated: bool       # true termination (vs horizon truncation)
    reason: Optional[str]
    breakdown: R.RewardBreakdown
    fault: bool = False


class SkillEnv:
    """One episode-at-a-time environment for a single skill."""

    def __init__(self, skill: SkillId,
                 params: Optional[WorldParams] = None,
                 weights: Optional[R.RewardWeights] = None,
                 noise_scale: float = 1.0,
                 pickup_ranges: Optional[scn.PickupRanges] = None,
                 randomization: Optional[scn.RandomizationRanges] = None,
                 randomize_dynamics: bool = True,
                 randomize_box_obs: bool = True,
                 static_hand_targets: bool = False,
                 action_mode: ActionMode = ActionMode.Relative,
                 horizon: Optional[int] = None,
                 initial_state_source: Optional[Callable] = None,
                 scenario_source: Optional[Callable] = None,
                 heading: float = 0.0):
        self.skill = skill
        self.base_params = params or WorldParams()
        self.weights = weights or R.RewardWeights()
        self.noise_scale = noise_scale
        self.pickup_ranges = pickup_ranges or scn.PickupRanges()
        self.randomization = randomization or scn.RandomizationRanges()
        self.randomize_dynamics = randomize_dynamics
        self.randomize_box_obs = randomize_box_obs
        self.static_hand_targets = static_hand_targets
        self.action_mode = action_mode
        self.horizon = horizon or scn.horizon_for(skill)
        self.initial_state_source = initial_state_source
        self.scenario_source = scenario_source
        self.heading = heading
        # episode state
        self.world: Optional[World] = None
        self.clock = PhaseClock()
        self.cmd: Optional[Command] = None
        self.traj = None
        self.prev_action = np.zeros(N_ACTUATORS)
        self.blend_from: Optional[np.ndarray] = None
        self.blend_k = 0
        self._rng_obs: Optional[np.random.Generator] = None
        self._resample_at = -1
        self._next_cmd: Optional[dict] = None
        self.scenario: Optional[scn.ScenarioSpec] = None
        self.target_world: Optional[np.ndarray] = None
        self.spawn_rejects = 0

    # -- episode construction ------------------------------------------------
    def _sample_scenario(self, rng: np.random.Generator) -> scn.ScenarioSpec:
        if self.scenario_source is not None:
            return self.scenario_source(rng)
        if self.skill == SkillId.PickUp:
            return scn.sample_pickup_scenario(rng, self.pickup_ranges, self.randomization,
                                              self.randomize_dynamics)
        return scn.sample_locomotion_scenario(rng, self.skill, self.randomization,
                                              self.randomize_dynamics)

    def reset(self, seed) -> np.ndarray:
        """Start a new episode; `seed` is an int or a SeedSequence."""
        master = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        s_scen, s_obs, s_box = master.spawn(3)
        rng_scen = np.random.default_rng(s_scen)
        self._rng_obs = np.random.default_rng(s_obs)
        rng_box = np.random.default_rng(s_box)

        spec = None
        world = None
        for _ in range(100):
            spec = self._sample_scenario(rng_scen)
            try:
                world = spawn_world(spec, self.base_params, heading=self.heading)
                break
            except SpawnError:
                self.spawn_rejects += 1
        if world is None:
            raise SpawnError("could not spawn a valid world in 100 draws")
        self.scenario = spec
        self.clock = PhaseClock()
        self.prev_action = np.zeros(N_ACTUATORS)
        self.blend_from = None
        self.blend_k = 0
        self._resample_at = -1
        self._next_cmd = None
        self.target_world = None

        if self.skill in (SkillId.WalkWithBox, SkillId.StandWithBox):
            world = self._place_box_in_hands(world, spec)

        entry = None
        if self.initial_state_source is not None:
            entry = self.initial_state_source(rng_scen)
        if entry is not None:
            world = world.with_updates(robot=entry.robot, box=entry.box)
            self.blend_from = np.asarray(entry.last_action, dtype=float)
            self.prev_action = self.blend_from.copy()

        self.cmd = self._build_command(world, spec, rng_box)
        if self.skill == SkillId.PickUp:
            obs_world = self._box_obs_world
            if self.static_hand_targets:
                self.traj = R.build_static_hand_targets(obs_world, self.target_world)
            else:
                hands = (world.robot.hand_pos_L, world.robot.hand_pos_R)
                self.traj = R.build_hand_trajectory(obs_world, self.target_world, hands)
        if self.skill in (SkillId.Walk, SkillId.WalkWithBox):
            c = spec.commands
            world = world.with_gait(True, c["vx"], c["vy"], c["yaw_rate"],
                                    phase=c.get("gait_phase"))
            self._resample_at = c.get("resample_at", -1)
            self._next_cmd = c.get("next")
        else:
            world = world.with_gait(False)
        if self.blend_from is None and self.skill in (SkillId.WalkWithBox, SkillId.StandWithBox):
            self.blend_from = self._grip_action(world)
            self.prev_action = self.blend_from.copy()
        self.world = world
        return self._observe()

    def _place_box_in_hands(self, world: World, spec: scn.ScenarioSpec) -> World:
        """Synthetic carry start: box at the carry point, hands pressed on
        its transverse faces hard enough to hold the sampled mass."""
        h_cmd = spec.commands.get("h_cmd", 1.15)
        dims = spec.box_dims
        mass = spec.box_mass
        from . import _kernel as K
        center = world.ref_to_world(np.array([R.CARRY_OFFSET[0], R.CARRY_OFFSET[1], h_cmd]))
        press = self._grip_force(mass) / world.params.contact_stiffness
        yaw = world.ref_yaw
        lateral = np.array([-np.sin(yaw), np.cos(yaw), 0.0])
        offset = 0.5 * dims[1] + K.HAND_RADIUS - press
        hand_l = center + offset * lateral
        hand_r = center - offset * lateral
        n = self._grip_force(mass)
        robot = dataclasses.replace(world.robot, hand_pos_L=hand_l, hand_pos_R=hand_r,
                                    hand_vel_L=np.zeros(3), hand_vel_R=np.zeros(3))
        box = BoxState(
            pos=center, quat=quat_from_yaw(yaw), linvel=np.zeros(3), angvel=np.zeros(3),
            linacc=np.zeros(3), dims=dims, mass=mass,
            contact_hand_L=True, contact_hand_R=True, contact_table=False,
            contact_ground=False,
            force_hand_L=-n * lateral, force_hand_R=n * lateral,
            force_table=np.zeros(3))
        return world.with_updates(robot=robot, box=box)

    def _grip_force(self, mass: float) -> float:
        return CARRY_GRIP_MARGIN * mass * self.base_params.gravity / (2.0 * self.base_params.friction_mu)

    def _grip_action(self, world: World) -> np.ndarray:
        """Relative action holding the current grip: inward hand pressure
        sized to the box weight, everything else neutral."""
        a = np.zeros(N_ACTUATORS)
        kp = world.params.pd_kp[7]
        inward = self._grip_force(world.box.mass) / kp
        a[7] = -inward   # left hand presses toward -y (in base frame)
        a[10] = inward   # right hand presses toward +y
        return np.clip(a, -0.3, 0.3)

    def _build_command(self, world: World, spec: scn.ScenarioSpec,
                       rng_box: np.random.Generator) -> Command:
        if self.skill == SkillId.Stand:
            return StandCommand()
        if self.skill == SkillId.Walk:
            c = spec.commands
            return WalkCommand(c["vx"], c["vy"], c["yaw_rate"])
        obs_world = scn.perturb_box_observation(world.box, rng_box, self.randomization,
                                                enabled=self.randomize_box_obs)
        self._box_obs_world = obs_world
        obs_ref = BoxObservation(
            dims=obs_world.dims,
            mass=obs_world.mass,
            start_pos=world.world_to_ref(obs_world.start_pos),
            start_yaw=wrap_angle(obs_world.start_yaw - world.ref_yaw),
        )
        if self.skill == SkillId.PickUp:
            target_ref = np.array([spec.target_pos[0], spec.target_pos[1],
                                   spec.target_pos[2] + 0.5 * spec.box_dims[2]])
            self.target_world = world.ref_to_world(target_ref)
            return PickUpCommand(box_obs=obs_ref, target_pos=target_ref,
                                 p_contact=0.0, p_lift=0.0)
        c = spec.commands
        if self.skill == SkillId.WalkWithBox:
            return WalkBoxCommand(c["vx"], c["vy"], c["yaw_rate"], obs_ref, c["h_cmd"])
        return StandBoxCommand(obs_ref, c["h_cmd"])

    # -- stepping -------------------------------------------------------------
    def _observe(self) -> np.ndarray:
        cmd = self.cmd
        if isinstance(cmd, PickUpCommand):
            cmd = dataclasses.replace(cmd, p_contact=self.clock.p_contact,
                                      p_lift=self.clock.p_lift)
            self.cmd = cmd
        return assemble_observation(self.world.robot, cmd, self.clock,
                                    self.noise_scale, self._rng_obs)

    def setpoints_for(self, action_vec: np.ndarray) -> np.ndarray:
        """Setpoints the env would apply for this action, including any
        active transition blending."""
        action = Action(np.asarray(action_vec, float), self.action_mode)
        cur = self.world.robot.actuator_pos
        neutral = neutral_setpoints()
        sp_new = apply_action(self.action_mode, action.clamped(), cur, neutral)
        if self.blend_from is not None and self.blend_k <= TRANSITION_BLEND_STEPS:
            sp_old = apply_action(self.action_mode, np.clip(self.blend_from, -0.3, 0.3),
                                  cur, neutral)
            return blend_setpoints(sp_old, sp_new, self.blend_k)
        return sp_new

    def step(self, action_vec: np.ndarray) -> StepResult:
        assert self.world is not None, "call reset() first"
        action = Action(np.asarray(action_vec, float), self.action_mode)
        setpoints = self.setpoints_for(action_vec)
        if self.blend_from is not None:
            self.blend_k += 1
            if self.blend_k > TRANSITION_BLEND_STEPS:
                self.blend_from = None
        try:
            world = step_policy_tick(self.world, setpoints, prev_action=action.clamped())
        except NumericalFault:
            return StepResult(obs=np.zeros_like(self._observe()), reward=0.0, done=True,
                              terminated=True, reason="numerical_fault",
                              breakdown=R.RewardBreakdown(), fault=True)
        self.clock = dataclasses.replace(self.clock, t=self.clock.t + 1)

        # scheduled mid-episode command resample for locomotion skills
        if self._resample_at == self.clock.t and self._next_cmd is not None:
            nc = self._next_cmd
            if isinstance(self.cmd, WalkCommand):
                self.cmd = WalkCommand(nc["vx"], nc["vy"], nc["yaw_rate"])
            elif isinstance(self.cmd, WalkBoxCommand):
                self.cmd = WalkBoxCommand(nc["vx"], nc["vy"], nc["yaw_rate"],
                                          self.cmd.box_obs, nc["h_cmd"])
            world = world.with_gait(True, nc["vx"], nc["vy"], nc["yaw_rate"])

        self.world = world
        prev = Action(self.prev_action, self.action_mode)
        breakdown = self._reward(world, action, prev)
        reward = R.compose(breakdown, self.weights)
        self.prev_action = action.clamped()

        reason = R.check_termination(world, self.clock, self.skill)
        terminated = reason is not None
        truncated = self.clock.t >= self.horizon
        return StepResult(obs=self._observe(), reward=reward,
                          done=terminated or truncated, terminated=terminated,
                          reason=reason, breakdown=breakdown)

    def _reward(self, world: World, action: Action, prev: Action) -> R.RewardBreakdown:
        if self.skill == SkillId.PickUp:
            return R.pickup_reward(world, self.cmd, self.clock, self.traj, action, prev)
        if self.skill == SkillId.Stand:
            return R.stand_reward(world, action, prev)
        if self.skill == SkillId.StandWithBox:
            return R.stand_reward(world, action, prev).merge(
                R.box_carry_terms(world, self.cmd.h_cmd))
        if self.skill == SkillId.Walk:
            return R.gait_reward(world, self.cmd, world.gait_phase, action, prev)
        if self.skill == SkillId.WalkWithBox:
            walk = WalkCommand(self.cmd.vx, self.cmd.vy, self.cmd.yaw_rate)
            return R.gait_reward(world, walk, world.gait_phase, action, prev).merge(
                R.box_carry_terms(world, self.cmd.h_cmd))
        raise ValueError(f"unknown skill {self.skill}")

    # -- episode summary -------------------------------------------------------
    def involves_box(self) -> bool:
        return self.skill in (SkillId.PickUp, SkillId.WalkWithBox, SkillId.StandWithBox)

    def episode_outcome(self, terminated: bool) -> dict:
        """Success per the evaluation protocol: no termination fired, and for
        box skills the box is still in both hands (and off the ground)."""
        world = self.world
        box_held = world.box.contact_hand_L and world.box.contact_hand_R
        success = not terminated
        error_m = None
        if self.involves_box():
            success = success and box_held and not world.box.contact_ground
            if self.skill == SkillId.PickUp:
                error_m = float(np.linalg.norm(world.box.pos - self.target_world))
            else:
                from .geom import quat_yaw, yaw_into
                r = world.robot
                rel = world.box.pos - np.array([r.base_pos[0], r.base_pos[1], 0.0])
                rel_xy = yaw_into(quat_yaw(r.base_quat), rel[:2])
                carry = np.array([R.CARRY_OFFSET[0], R.CARRY_OFFSET[1], self.cmd.h_cmd])
                error_m = float(np.linalg.norm(np.array([rel_xy[0], rel_xy[1], rel[2]]) - carry))
        return {"success": bool(success), "error_m": error_m, "box_held": bool(box_held)}
