"""The pickup reward calculus: hand trajectory construction, per-term
costs, composition, and what the phase gate does to the contact bonus.

Run:  python3 demos/03_hand_trajectory_and_rewards.py
"""
import dataclasses

import numpy as np

from boxloco import rewards as R
from boxloco.physics import make_neutral_world
from boxloco.world import (Action, BoxObservation, PhaseClock, PickUpCommand, SkillId,
                           N_ACTUATORS)

world = make_neutral_world(box_pos=(0.45, 0.0, 0.95), box_dims=(0.3, 0.3, 0.3),
                           box_mass=2.0, table_top=0.8)
obs = BoxObservation(dims=world.box.dims, mass=world.box.mass,
                     start_pos=world.box.pos, start_yaw=0.0)
target = np.array([0.45, 0.0, 1.25])
traj = R.build_hand_trajectory(obs, target, (world.robot.hand_pos_L,
                                             world.robot.hand_pos_R))

print("hand trajectory knots (left hand):")
for label, t, point in (("start", 0, traj.start_L), ("goal1", 75, traj.goal1_L),
                        ("goal2", 100, traj.goal2_L), ("goal3", 175, traj.goal3_L)):
    print(f"  {label:6s} t={t:3d}  {np.round(point, 3)}")
print("goal1 sits 10 cm outboard of the face; goal3 flanks the target,"
      " one box width apart:",
      round(float(traj.goal3_L[1] - traj.goal3_R[1]), 3), "m")

# Per-term costs with the hands exactly on the trajectory.
zero = Action(np.zeros(N_ACTUATORS))
cmd = PickUpCommand(box_obs=obs, target_pos=target)
quiet = world.with_updates(robot=dataclasses.replace(
    world.robot, actuator_vel=np.zeros(N_ACTUATORS), actuator_force=np.zeros(N_ACTUATORS)))
breakdown = R.pickup_reward(quiet, cmd, PhaseClock(t=0), traj, zero, zero)
weights = R.RewardWeights()
print("\nper-term raw costs at the nominal start:")
for name, cost in sorted(breakdown.terms.items()):
    print(f"  {name:14s} r={cost:8.3f}  w*exp(-r)={weights[name] * np.exp(-cost):.4f}")
print("composed:", round(R.compose(breakdown, weights), 4),
      "(weights sum to", sum(R.PICKUP_WEIGHTS.values()), ")")

# The contact bonus only activates once the contact phase has elapsed.
held = quiet.with_updates(box=dataclasses.replace(
    quiet.box, contact_hand_L=True, contact_hand_R=True))
for t in (50, 100, 150):
    bd = R.pickup_reward(held, cmd, PhaseClock(t=t), traj, zero, zero)
    print(f"t={t:3d}: contact bonus {bd.contact_bonus:+.2f}")

# Termination conditions fire on a first-match basis.
low = quiet.with_updates(robot=dataclasses.replace(
    quiet.robot, base_pos=np.array([0.0, 0.0, 0.39])))
print("\ntorso at 0.39 m ->", R.check_termination(low, PhaseClock(t=10), SkillId.PickUp))
