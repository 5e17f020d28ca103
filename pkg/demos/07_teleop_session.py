"""Drive the live simulation over the teleop wire protocol: a scripted
operator connects, walks the robot, gets clamped, transitions to pickup,
and pauses the world.

Run:  python3 demos/07_teleop_session.py
"""
import asyncio
import dataclasses
import json

from boxloco.ppo import TrainConfig, init_policy
from boxloco.teleop import TeleopServer
from boxloco.world import SkillId


async def main():
    import websockets

    base = TrainConfig(skill=SkillId.Stand, workers=1, seed=0)
    policies = {s: init_policy(dataclasses.replace(base, skill=s)) for s in SkillId}
    server = TeleopServer(policies, time_scale=0.0, noise_scale=0.0, seed=11)
    task = asyncio.create_task(server.run(port=0))
    await server._ready.wait()
    print(f"teleop service listening on ws://127.0.0.1:{server.bound_port}")

    async with websockets.connect(f"ws://127.0.0.1:{server.bound_port}") as ws:
        async def recv():
            return json.loads(await ws.recv())

        async def until(pred, limit=400):
            for _ in range(limit):
                frame = await recv()
                if pred(frame):
                    return frame
            raise RuntimeError("expected frame never arrived")

        hello = await recv()
        print("hello:", hello["role"], "| command limits:", hello["limits"])

        state = await until(lambda f: f["type"] == "state")
        print(f"state #{state['seq']}: skill={state['skill']} "
              f"allowed={state['allowed_transitions']}")

        await ws.send(json.dumps({"type": "cmd", "vx": 2.5}))
        warn = await until(lambda f: f["type"] == "warning")
        print("warning:", warn["reason"])

        await ws.send(json.dumps({"type": "transition", "skill": "Walk"}))
        state = await until(lambda f: f["type"] == "state" and f["skill"] == "Walk")
        print(f"now walking at clamped vx={state['cmd']['vx']} m/s")

        await ws.send(json.dumps({"type": "transition", "skill": "PickUp"}))
        err = await until(lambda f: f["type"] == "error")
        print("rejected:", err["reason"])

        await ws.send(json.dumps({"type": "transition", "skill": "Stand"}))
        await until(lambda f: f["type"] == "state" and f["skill"] == "Stand")
        await ws.send(json.dumps({"type": "transition", "skill": "PickUp"}))
        state = await until(lambda f: f["type"] == "state" and f["skill"] == "PickUp")
        print(f"picking up: phases p_contact={state['p_contact']} p_lift={state['p_lift']}")

        await ws.send(json.dumps({"type": "pause"}))
        a = await until(lambda f: f["type"] == "state" and f["paused"])
        b = await until(lambda f: f["type"] == "state")
        print("paused; consecutive frames identical:",
              a["time"] == b["time"] and a["robot"] == b["robot"])

    server.stop()
    await task
    print("session closed.")


if __name__ == "__main__":
    asyncio.run(main())
