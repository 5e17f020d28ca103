"""Skill graph, action blending, initial-state datasets, and a scripted
full task (stand, pick the box up, set it down on another table).

Run:  python3 demos/06_skill_transitions.py
"""
import dataclasses
import os

import numpy as np

from boxloco.ppo import TrainConfig, init_policy
from boxloco.skills import (DisallowedTransition, SkillGraph, blend_actions,
                            generate_initial_states, low_speed_filter, run_full_task)
from boxloco.world import SkillId

graph = SkillGraph.default()
print("allowed transitions:")
for skill in SkillId:
    print(f"  {skill.value:13s} -> {[s.value for s in graph.successors(skill)]}")

try:
    graph.validate_sequence([SkillId.Walk, SkillId.PickUp])
except DisallowedTransition as e:
    print("\nrejected before execution:", e)

# Transition blending: 10 timesteps of linear interpolation between the
# outgoing and incoming policies' actions.
a_old = np.full(12, 0.2)
a_new = np.full(12, -0.1)
print("\nblend_actions endpoints:", blend_actions(a_old, a_new, 0)[0],
      blend_actions(a_old, a_new, 10)[0],
      "midpoint:", blend_actions(a_old, a_new, 5)[0])

# Initial-state datasets: roll a predecessor policy, keep low-speed states.
base = TrainConfig(skill=SkillId.Stand, workers=1, seed=0)
stand_policy = init_policy(base)
dataset = generate_initial_states(stand_policy, SkillId.Stand, n=5,
                                  filter_predicate=low_speed_filter(0.5),
                                  config=base, seed=0)
os.makedirs("runs", exist_ok=True)
dataset.save("runs/demo_stand_states.jsonl")
print(f"\nharvested {len(dataset.entries)} low-speed stand states "
      f"(saved to runs/demo_stand_states.jsonl)")
e = dataset.entries[0]
print("  first entry: base", np.round(e.robot.base_pos, 3),
      "last action |a|:", round(float(np.max(np.abs(e.last_action))), 3))

# The full task executor wires policies through the graph with blending.
policies = {s: init_policy(dataclasses.replace(base, skill=s)) for s in SkillId}
script = [
    {"skill": "Stand", "steps": 25},
    {"skill": "PickUp", "steps": 40, "command": {"target": [0.45, 0.0, 1.0]}},
]
log = run_full_task(policies, script, seed=0)
print("\nfull-task log (untrained policies, so expect early termination):")
for phase in log["phases"]:
    print(f"  {phase['skill']:8s} steps={phase['steps_run']:3d} "
          f"completed={phase['completed']} reason={phase['reason']}")
print("task success:", log["success"], " fall:", log["fall"])
