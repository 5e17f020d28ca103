"""Skill transition graph, action blending, initial-state datasets, and the
scripted table-to-table task executor.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .envs import blend_setpoints, TRANSITION_BLEND_STEPS
from .geom import quat_yaw, wrap_angle
from .physics import World, WorldParams, make_neutral_world, step_policy_tick, neutral_setpoints
from .policy import HiddenState, PolicyParams, apply_action, forward
from .rewards import check_termination
from .world import (Action, BoxObservation, BoxState, PhaseClock, PickUpCommand,
                    RobotState, SkillId, StandBoxCommand, StandCommand,
                    WalkBoxCommand, WalkCommand, assemble_observation, N_ACTUATORS)


def blend_actions(a_old: np.ndarray, a_new: np.ndarray, k: int) -> np.ndarray:
    """(1 - k/10) * a_old + (k/10) * a_new for k in 0..10."""
    return blend_setpoints(a_old, a_new, k)


class DisallowedTransition(ValueError):
    pass


@dataclass(frozen=True)
class SkillGraph:
    edges: frozenset

    @staticmethod
    def default() -> "SkillGraph":
        W, S, P, WB, SB = (SkillId.Walk, SkillId.Stand, SkillId.PickUp,
                           SkillId.WalkWithBox, SkillId.StandWithBox)
        return SkillGraph(frozenset({
            (W, S), (S, W),
            (S, P),
            (P, SB),
            (SB, WB), (WB, SB),
            (SB, P),   # place variant: put the box back down on a surface
            (P, S),    # after placing, back to plain standing
        }))

    def allowed(self, src: SkillId, dst: SkillId) -> bool:
        return (src, dst) in self.edges

    def successors(self, src: SkillId) -> list[SkillId]:
        return sorted((b for a, b in self.edges if a == src), key=lambda s: s.value)

    def validate_sequence(self, sequence: list[SkillId]) -> None:
        for a, b in zip(sequence, sequence[1:]):
            if not self.allowed(a, b):
                raise DisallowedTransition(f"transition {a.value}->{b.value} is not allowed")


# --- initial-state datasets -------------------------------------------------

def _array(v) -> list:
    return [float(x) for x in np.asarray(v).ravel()]


def robot_to_dict(r: RobotState) -> dict:
    return {f.name: (_array(getattr(r, f.name)) if isinstance(getattr(r, f.name), np.ndarray)
                     else getattr(r, f.name))
            for f in dataclasses.fields(r)}


def robot_from_dict(d: dict) -> RobotState:
    kwargs = {}
    for f in dataclasses.fields(RobotState):
        v = d[f.name]
        kwargs[f.name] = np.asarray(v, dtype=float) if isinstance(v, list) else v
    return RobotState(**kwargs)


def box_to_dict(b: Optional[BoxState]) -> Optional[dict]:
    if b is None:
        return None
    out = {}
    for f in dataclasses.fields(b):
        v = getattr(b, f.name)
        out[f.name] = _array(v) if isinstance(v, np.ndarray) else v
    return out


def box_from_dict(d: Optional[dict]) -> Optional[BoxState]:
    if d is None:
        return None
    kwargs = {}
    for f in dataclasses.fields(BoxState):
        v = d[f.name]
        kwargs[f.name] = np.asarray(v, dtype=float) if isinstance(v, list) else v
    return BoxState(**kwargs)


@dataclass(frozen=True)
class StateDatasetEntry:
    robot: RobotState
    box: Optional[BoxState]
    last_action: np.ndarray
    source_skill: SkillId

    def __post_init__(self):
        object.__setattr__(self, "last_action", np.asarray(self.last_action, dtype=float))
        if self.last_action.shape != (N_ACTUATORS,):
            raise ValueError("last_action must be a 12-vector")

    def to_json(self) -> str:
        return json.dumps({
            "robot": robot_to_dict(self.robot),
            "box": box_to_dict(self.box),
            "last_action": _array(self.last_action),
            "source_skill": self.source_skill.value,
        }, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "StateDatasetEntry":
        d = json.loads(line)
        return StateDatasetEntry(
            robot=robot_from_dict(d["robot"]),
            box=box_from_dict(d["box"]),
            last_action=d["last_action"],
            source_skill=SkillId(d["source_skill"]),
        )


DATASET_VERSION = 1


@dataclass
class StateDataset:
    entries: list
    source_skill: SkillId

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"version": DATASET_VERSION,
                                 "source_skill": self.source_skill.value,
                                 "count": len(self.entries)}) + "\n")
            for e in self.entries:
                fh.write(e.to_json() + "\n")

    @staticmethod
    def load(path: str) -> "StateDataset":
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header["version"] != DATASET_VERSION:
                raise ValueError(f"unsupported dataset version {header['version']}")
            entries = [StateDatasetEntry.from_json(line) for line in fh if line.strip()]
        return StateDataset(entries=entries, source_skill=SkillId(header["source_skill"]))

    def sampler(self) -> Callable:
        def sample(rng: np.random.Generator) -> StateDatasetEntry:
            return self.entries[int(rng.integers(0, len(self.entries)))]
        return sample


def low_speed_filter(max_speed: float = 0.2) -> Callable:
    def accept(world: World) -> bool:
        return float(np.linalg.norm(world.robot.base_linvel)) < max_speed
    return accept


class DatasetGenerationError(RuntimeError):
    pass


def generate_initial_states(params: PolicyParams, skill: SkillId, n: int,
                            filter_predicate: Optional[Callable] = None,
                            config=None, seed: int = 0, stride: int = 5,
                            env=None) -> StateDataset:
    """Roll the predecessor policy and harvest filter-passing states.

    Fails if fewer than 1% of examined states pass after 10*n attempts.
    """
    from .ppo import TrainConfig, build_env  # local import avoids a cycle

    accept = filter_predicate or (lambda world: True)
    if env is None:
        config = config or TrainConfig(skill=skill, workers=1)
        config = dataclasses.replace(config, skill=skill)
        env = build_env(config)
    entries = []
    attempts = 0
    ep = 0
    while len(entries) < n:
        ss = np.random.SeedSequence((seed, 0xDA7A, ep))
        s_env, s_act = ss.spawn(2)
        rng_act = np.random.default_rng(s_act)
        obs = env.reset(s_env)
        hidden = HiddenState.zeros(params)
        for t in range(env.horizon):
            mean, _, _, hidden = forward(params, obs, hidden)
            from .policy import sample_action
            action, _ = sample_action(params, mean, rng_act)
            res = env.step(action)
            if res.fault:
                break
            if t % stride == 0:
                attempts += 1
                if accept(env.world):
                    entries.append(StateDatasetEntry(
                        robot=env.world.robot,
                        box=env.world.box if env.involves_box() else None,
                        last_action=env.prev_action.copy(),
                        source_skill=skill,
                    ))
                    if len(entries) >= n:
                        break
            obs = res.obs
            if res.done:
                break
        ep += 1
        if attempts >= 10 * n and len(entries) < max(1, attempts // 100):
            raise DatasetGenerationError(
                f"acceptance rate {len(entries)}/{attempts} below 1% after {attempts} attempts")
    return StateDataset(entries=entries, source_skill=skill)


# --- full-task execution -------------------------------------------------------

FATAL_REASONS = {"torso_low", "torso_pitch", "torso_roll"}
DEFAULT_PICKUP_STEPS = 225


@dataclass
class PhaseLog:
    skill: str
    steps_run: int
    completed: bool
    reason: Optional[str]
    box_error_m: Optional[float] = None


def _phase_command(world: World, skill: SkillId, payload: dict):
    """Command objects for a task phase, anchored to the current robot pose."""
    if skill == SkillId.Stand:
        return StandCommand(), None
    if skill == SkillId.Walk:
        return WalkCommand(payload.get("vx", 0.0), payload.get("vy", 0.0),
                           payload.get("yaw_rate", 0.0)), None
    box = world.box
    obs = BoxObservation(dims=box.dims.copy(), mass=box.mass,
                         start_pos=world.world_to_ref(box.pos),
                         start_yaw=wrap_angle(quat_yaw(box.quat) - world.ref_yaw))
    if skill == SkillId.PickUp:
        target = np.asarray(payload["target"], dtype=float)  # ref frame, bottom z
        target_center = np.array([target[0], target[1], target[2] + 0.5 * box.dims[2]])
        return PickUpCommand(box_obs=obs, target_pos=target_center), target_center
    if skill == SkillId.WalkWithBox:
        return WalkBoxCommand(payload.get("vx", 0.0), payload.get("vy", 0.0),
                              payload.get("yaw_rate", 0.0), obs,
                              payload.get("h_cmd", 1.15)), None
    if skill == SkillId.StandWithBox:
        return StandBoxCommand(obs, payload.get("h_cmd", 1.15)), None
    raise ValueError(f"unknown skill {skill}")


def run_full_task(policies: dict, script: list[dict], graph: Optional[SkillGraph] = None,
                  params: Optional[WorldParams] = None, seed: int = 0,
                  noise_scale: float = 0.0, start_world: Optional[World] = None) -> dict:
    """Execute a scripted skill sequence with 10-step action blending at
    each transition. Scripts with graph-illegal edges are rejected before
    anything runs. Returns the per-phase episode log."""
    graph = graph or SkillGraph.default()
    sequence = [SkillId(p["skill"]) for p in script]
    graph.validate_sequence(sequence)
    for s in sequence:
        if s not in policies:
            raise KeyError(f"no policy loaded for {s.value}")

    log = {"phases": [], "success": True, "fall": False, "final_box_error_m": None}
    if not script:
        return log

    world = start_world if start_world is not None else make_neutral_world(params)
    rng_obs = np.random.default_rng(np.random.SeedSequence((seed, 0x0B5)))
    prev_action = np.zeros(N_ACTUATORS)

    from .rewards import build_hand_trajectory  # traj for pickup observation phases
    for phase in script:
        skill = SkillId(phase["skill"])
        policy: PolicyParams = policies[skill]
        payload = dict(phase.get("command", {}))
        steps = int(phase.get("steps", DEFAULT_PICKUP_STEPS if skill == SkillId.PickUp else 100))
        if "table" in phase:
            world = world.with_table(phase["table"])
        # re-anchor the scenario frame on the robot's current pose
        world = world.with_ref(quat_yaw(world.robot.base_quat),
                               world.robot.base_pos[:2])
        if skill in (SkillId.Walk, SkillId.WalkWithBox):
            world = world.with_gait(True, payload.get("vx", 0.0), payload.get("vy", 0.0),
                                    payload.get("yaw_rate", 0.0))
        else:
            world = world.with_gait(False)
        cmd, pickup_target = _phase_command(world, skill, payload)
        clock = PhaseClock()
        hidden = HiddenState.zeros(policy)
        blend_old = prev_action.copy()
        reason = None
        t = 0
        for t in range(steps):
            if isinstance(cmd, PickUpCommand):
                cmd = dataclasses.replace(cmd, p_contact=clock.p_contact, p_lift=clock.p_lift)
            obs = assemble_observation(world.robot, cmd, clock, noise_scale, rng_obs)
            mean, _, _, hidden = forward(policy, obs, hidden)
            action = Action(mean, policy.action_mode).clamped()
            cur = world.robot.actuator_pos
            sp_new = apply_action(policy.action_mode, action, cur, policy.neutral_offsets)
            if t <= TRANSITION_BLEND_STEPS:
                sp_old = apply_action(policy.action_mode, np.clip(blend_old, -0.3, 0.3),
                                      cur, policy.neutral_offsets)
                setpoints = blend_setpoints(sp_old, sp_new, min(t, TRANSITION_BLEND_STEPS))
            else:
                setpoints = sp_new
            world = step_policy_tick(world, setpoints).with_prev_action(action)
            clock = dataclasses.replace(clock, t=clock.t + 1)
            prev_action = action
            reason = check_termination(world, clock, skill)
            if reason:
                break
        completed = reason is None
        error = None
        if pickup_target is not None:
            error = float(np.linalg.norm(world.box.pos - world.ref_to_world(pickup_target)))
            log["final_box_error_m"] = error
        log["phases"].append(dataclasses.asdict(PhaseLog(
            skill=skill.value, steps_run=t + 1 if steps else 0, completed=completed,
            reason=reason, box_error_m=error)))
        if not completed:
            log["success"] = False
            if reason in FATAL_REASONS:
                log["fall"] = True
            break
    return log
