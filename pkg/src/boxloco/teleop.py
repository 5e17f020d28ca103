"""Teleoperation service: a websocket wire protocol around the live
simulation so an operator can command skill transitions, velocity and
box-height targets, pauses, and resets.

Frames are JSON objects. Client -> server:
    {"type": "transition", "skill": "<SkillId>", "target": [x, y, z]?}
    {"type": "cmd", "vx": f, "vy": f, "yaw_rate": f, "h_cmd": f?}
    {"type": "pause"}
    {"type": "reset", "scenario_seed": int}
Server -> client (every frame carries a per-connection monotone "seq"):
    {"type": "hello", "role": "operator"|"observer", ...}
    {"type": "state", "time", "skill", "paused", "robot", "box",
     "p_contact", "p_lift", "reward", "terminated", "allowed_transitions"}
    {"type": "warning"|"error", "reason": str}

One operator connection at a time; extra clients join read-only. Commands
outside the training ranges are clamped (with a warning frame), and
transitions violating the skill graph are rejected with an error frame.
"""
from __future__ import annotations

import asyncio
import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import scenarios as scn
from .envs import TRANSITION_BLEND_STEPS, blend_setpoints
from .geom import quat_to_rpy, quat_yaw
from .physics import World, WorldParams, make_neutral_world, spawn_world, step_policy_tick
from .policy import HiddenState, PolicyParams, apply_action, forward
from .rewards import RewardWeights, check_termination, compose
from .skills import SkillGraph, _phase_command
from .world import Action, PhaseClock, PickUpCommand, SkillId, assemble_observation, N_ACTUATORS

POLICY_HZ = 50
STATE_FRAME_EVERY = 5  # ticks -> 10 Hz
CMD_LIMITS = {
    "vx": scn.WALK_VX_RANGE,
    "vy": scn.WALK_VY_RANGE,
    "yaw_rate": scn.WALK_YAWRATE_RANGE,
    "h_cmd": scn.CARRY_HEIGHT_RANGE,
}


def clamp_cmd(payload: dict) -> tuple[dict, list[str]]:
    """Clamp operator command fields to the training ranges."""
    out = {}
    clamped = []
    for key, (lo, hi) in CMD_LIMITS.items():
        if key in payload and payload[key] is not None:
            v = float(payload[key])
            c = min(max(v, lo), hi)
            if c != v:
                clamped.append(key)
            out[key] = c
    return out, clamped


class _Client:
    def __init__(self, socket, role: str):
        self.socket = socket
        self.role = role
        self.seq = 0

    async def send(self, frame: dict) -> None:
        frame = dict(frame)
        frame["seq"] = self.seq
        self.seq += 1
        await self.socket.send(json.dumps(frame))


class TeleopServer:
    """Steps the simulation under the active skill policy and serves the
    wire protocol. `time_scale` < 1 slows the sim relative to wall clock;
    0 runs as fast as the event loop allows (tests)."""

    def __init__(self, policies: dict, params: Optional[WorldParams] = None,
                 graph: Optional[SkillGraph] = None, weights: Optional[RewardWeights] = None,
                 time_scale: float = 1.0, noise_scale: float = 0.0, seed: int = 0):
        if SkillId.Stand not in policies:
            raise ValueError("teleop requires at least the Stand policy")
        self.policies = policies
        self.params = params or WorldParams()
        self.graph = graph or SkillGraph.default()
        self.weights = weights or RewardWeights()
        self.time_scale = time_scale
        self.noise_scale = noise_scale
        self.seed = seed
        self.clients: list[_Client] = []
        self.operator: Optional[_Client] = None
        self.transition_queue: asyncio.Queue = asyncio.Queue()
        self.pending_cmd: Optional[dict] = None
        self.pause_requested = False
        self.reset_seed: Optional[int] = None
        self.paused = False
        self.frozen = False  # after a fall, wait for reset
        self.tick_count = 0
        self.last_reward = 0.0
        self.terminated_reason: Optional[str] = None
        self._stop = asyncio.Event()
        self._ready = asyncio.Event()
        self.bound_port: Optional[int] = None
        self._init_sim(seed)

    # --- simulation state -------------------------------------------------
    def _init_sim(self, scenario_seed: int) -> None:
        rng = np.random.default_rng(scenario_seed)
        spec = scn.sample_pickup_scenario(rng, randomize=False)
        self.world = spawn_world(spec, self.params)
        self.skill = SkillId.Stand
        self.cmd_values = {"vx": 0.0, "vy": 0.0, "yaw_rate": 0.0, "h_cmd": 1.15}
        self.clock = PhaseClock()
        self.hidden = HiddenState.zeros(self.policies[self.skill])
        self.command, self._pickup_target = _phase_command(self.world, self.skill, {})
        self.prev_action = np.zeros(N_ACTUATORS)
        self.blend_old: Optional[np.ndarray] = None
        self.blend_k = 0
        self.rng_obs = np.random.default_rng(np.random.SeedSequence((scenario_seed, 0x0B5)))
        self.frozen = False
        self.terminated_reason = None
        self.last_reward = 0.0

    def _enter_skill(self, skill: SkillId, payload: dict) -> None:
        self.skill = skill
        self.clock = PhaseClock()
        self.hidden = HiddenState.zeros(self.policies[skill])
        self.blend_old = self.prev_action.copy()
        self.blend_k = 0
        self.world = self.world.with_ref(quat_yaw(self.world.robot.base_quat),
                                         self.world.robot.base_pos[:2])
        merged = dict(self.cmd_values)
        merged.update(payload)
        if skill == SkillId.PickUp and "target" not in merged:
            box_ref = self.world.world_to_ref(self.world.box.pos)
            merged["target"] = [box_ref[0], box_ref[1],
                                box_ref[2] - 0.5 * self.world.box.dims[2] + 0.25]
        self.command, self._pickup_target = _phase_command(self.world, skill, merged)
        self._apply_gait()

    def _apply_gait(self) -> None:
        c = self.cmd_values
        if self.skill in (SkillId.Walk, SkillId.WalkWithBox):
            self.world = self.world.with_gait(True, c["vx"], c["vy"], c["yaw_rate"])
        else:
            self.world = self.world.with_gait(False)

    def _refresh_command(self) -> None:
        c = self.cmd_values
        from .world import WalkCommand, WalkBoxCommand, StandBoxCommand
        if isinstance(self.command, WalkCommand):
            self.command = WalkCommand(c["vx"], c["vy"], c["yaw_rate"])
        elif isinstance(self.command, WalkBoxCommand):
            self.command = WalkBoxCommand(c["vx"], c["vy"], c["yaw_rate"],
                                          self.command.box_obs, c["h_cmd"])
        elif isinstance(self.command, StandBoxCommand):
            self.command = StandBoxCommand(self.command.box_obs, c["h_cmd"])
        self._apply_gait()

    def step_once(self) -> None:
        """Apply queued operator input, then advance one policy tick."""
        if self.reset_seed is not None:
            self._init_sim(self.reset_seed)
            self.reset_seed = None
            return
        if self.pause_requested:
            self.paused = not self.paused
            self.pause_requested = False
        while not self.transition_queue.empty():
            skill, payload = self.transition_queue.get_nowait()
            self._enter_skill(skill, payload)
        if self.pending_cmd is not None:
            self.cmd_values.update(self.pending_cmd)
            self.pending_cmd = None
            self._refresh_command()
        if self.paused or self.frozen:
            return

        policy = self.policies[self.skill]
        if isinstance(self.command, PickUpCommand):
            self.command = dataclasses.replace(self.command, p_contact=self.clock.p_contact,
                                               p_lift=self.clock.p_lift)
        obs = assemble_observation(self.world.robot, self.command, self.clock,
                                   self.noise_scale, self.rng_obs)
        mean, _, _, self.hidden = forward(policy, obs, self.hidden)
        action = Action(mean, policy.action_mode).clamped()
        cur = self.world.robot.actuator_pos
        sp = apply_action(policy.action_mode, action, cur, policy.neutral_offsets)
        if self.blend_old is not None:
            sp_old = apply_action(policy.action_mode, np.clip(self.blend_old, -0.3, 0.3),
                                  cur, policy.neutral_offsets)
            sp = blend_setpoints(sp_old, sp, min(self.blend_k, TRANSITION_BLEND_STEPS))
            self.blend_k += 1
            if self.blend_k > TRANSITION_BLEND_STEPS:
                self.blend_old = None
        self.world = step_policy_tick(self.world, sp).with_prev_action(action)
        self.prev_action = action
        self.clock = dataclasses.replace(self.clock, t=self.clock.t + 1)
        self.tick_count += 1
        reason = check_termination(self.world, self.clock, self.skill)
        if reason:
            self.terminated_reason = reason
            self.frozen = True

    def state_frame(self) -> dict:
        r = self.world.robot
        b = self.world.box
        roll, pitch, yaw = quat_to_rpy(r.base_quat)
        return {
            "type": "state",
            "time": round(self.world.time, 4),
            "skill": self.skill.value,
            "paused": self.paused,
            "frozen": self.frozen,
            "robot": {
                "base_pos": [round(float(v), 4) for v in r.base_pos],
                "rpy": [round(float(v), 4) for v in (roll, pitch, yaw)],
                "hand_L": [round(float(v), 4) for v in r.hand_pos_L],
                "hand_R": [round(float(v), 4) for v in r.hand_pos_R],
                "foot_L": [round(float(v), 4) for v in r.foot_pos_L],
                "foot_R": [round(float(v), 4) for v in r.foot_pos_R],
                "cop": [round(float(v), 4) for v in r.cop],
                "foot_contact": [r.foot_contact_L, r.foot_contact_R],
            },
            "box": {
                "pos": [round(float(v), 4) for v in b.pos],
                "yaw": round(quat_yaw(b.quat), 4),
                "dims": [round(float(v), 4) for v in b.dims],
                "mass": round(b.mass, 3),
                "held": [b.contact_hand_L, b.contact_hand_R],
                "on_ground": b.contact_ground,
            },
            "table": [round(float(v), 4) for v in self.world.table_pose],
            "p_contact": round(self.clock.p_contact, 4),
            "p_lift": round(self.clock.p_lift, 4),
            "reward": round(self.last_reward, 5),
            "terminated": self.terminated_reason,
            "allowed_transitions": [s.value for s in self.graph.successors(self.skill)],
            "cmd": dict(self.cmd_values),
        }

    # --- protocol ------------------------------------------------------------
    async def handle_frame(self, client: _Client, raw: str) -> None:
        try:
            frame = json.loads(raw)
            ftype = frame.get("type")
        except (json.JSONDecodeError, AttributeError):
            await client.send({"type": "error", "reason": "malformed frame"})
            return
        if client.role != "operator":
            await client.send({"type": "error", "reason": "read-only connection"})
            return
        if ftype == "transition":
            try:
                skill = SkillId(frame.get("skill"))
            except ValueError:
                await client.send({"type": "error", "reason": f"unknown skill {frame.get('skill')!r}"})
                return
            if skill not in self.policies:
                await client.send({"type": "error", "reason": f"no policy for {skill.value}"})
                return
            if not self.graph.allowed(self.skill, skill):
                await client.send({"type": "error",
                                   "reason": f"transition {self.skill.value}->{skill.value} is not allowed"})
                return
            payload = {k: frame[k] for k in ("target", "h_cmd") if k in frame}
            await self.transition_queue.put((skill, payload))
        elif ftype == "cmd":
            cmd, clamped = clamp_cmd(frame)
            self.pending_cmd = cmd
            if clamped:
                await client.send({"type": "warning",
                                   "reason": f"clamped to training range: {', '.join(clamped)}",
                                   "cmd": cmd})
        elif ftype == "pause":
            self.pause_requested = True
        elif ftype == "reset":
            self.reset_seed = int(frame.get("scenario_seed", 0))
        else:
            await client.send({"type": "error", "reason": f"unknown frame type {ftype!r}"})

    async def _connection(self, socket) -> None:
        role = "operator" if self.operator is None else "observer"
        client = _Client(socket, role)
        if role == "operator":
            self.operator = client
        self.clients.append(client)
        try:
            await client.send({"type": "hello", "role": role,
                               "skills": [s.value for s in self.policies],
                               "limits": {k: list(v) for k, v in CMD_LIMITS.items()}})
            await client.send(self.state_frame())
            async for raw in socket:
                await self.handle_frame(client, raw)
        finally:
            self.clients.remove(client)
            if self.operator is client:
                self.operator = None

    async def _sim_loop(self) -> None:
        tick = 0
        loop = asyncio.get_event_loop()
        next_time = loop.time()
        while not self._stop.is_set():
            self.step_once()
            tick += 1
            if tick % STATE_FRAME_EVERY == 0:
                frame = self.state_frame()
                for client in list(self.clients):
                    try:
                        await client.send(frame)
                    except Exception:
                        pass
            if self.time_scale > 0:
                next_time += (1.0 / POLICY_HZ) / self.time_scale
                delay = next_time - loop.time()
                await asyncio.sleep(max(delay, 0.0))
            else:
                await asyncio.sleep(0)

    async def run(self, host: str = "127.0.0.1", port: int = 8787) -> None:
        import websockets
        sim = asyncio.create_task(self._sim_loop())
        async with websockets.serve(self._connection, host, port) as server:
            sockets = getattr(server, "sockets", None) or server.server.sockets
            self.bound_port = sockets[0].getsockname()[1]
            self._ready.set()
            print(f"TELEOP_LISTENING ws://{host}:{self.bound_port}", flush=True)
            await self._stop.wait()
        sim.cancel()

    def stop(self) -> None:
        self._stop.set()


def serve(policies: dict, port: int = 8787, **kwargs) -> None:
    """Blocking entry point used by the CLI's `serve` subcommand."""
    server = TeleopServer(policies, **kwargs)
    try:
        asyncio.run(server.run(port=port))
    except KeyboardInterrupt:
        pass
