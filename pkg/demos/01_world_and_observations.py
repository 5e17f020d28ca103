"""Tour of the world model: the reduced-order robot, the box, and what a
policy actually sees.

Run:  python3 demos/01_world_and_observations.py
"""
import numpy as np

from boxloco.physics import make_neutral_world
from boxloco.world import (BoxObservation, PhaseClock, PickUpCommand, StandCommand,
                           advance_clock, assemble_observation,
                           OBS_DIM, ROBOT_OBS_DIM)

# A world with the robot in its neutral stance and a 2 kg box on a table.
world = make_neutral_world(box_pos=(0.45, 0.0, 0.95), box_dims=(0.3, 0.3, 0.3),
                           box_mass=2.0, table_top=0.8)
r = world.robot
print("base position:   ", np.round(r.base_pos, 3))
print("hands (world):   ", np.round(r.hand_pos_L, 3), np.round(r.hand_pos_R, 3))
print("feet:            ", np.round(r.foot_pos_L, 3), np.round(r.foot_pos_R, 3))
print("stance width:    ", round(float(r.foot_pos_L[1] - r.foot_pos_R[1]), 3), "m")
print("center of pressure over foot midpoint:",
      np.round(r.cop - 0.5 * (r.foot_pos_L[:2] + r.foot_pos_R[:2]), 5))
print("box center:      ", np.round(world.box.pos, 3),
      "on table:", world.box.contact_table)

# The 12 actuator coordinates the policy edits: base lean/height/attitude
# plus each hand's position in the base yaw frame.
print("\nactuator positions:", np.round(r.actuator_pos, 3))

# Observations: 33 noise-eligible robot entries, a skill one-hot, a
# zero-padded command payload, and the two pickup phase indicators.
rng = np.random.default_rng(0)
obs = assemble_observation(r, StandCommand(), PhaseClock(), 0.0, rng)
print(f"\nobservation length: {len(obs)} "
      f"(robot {ROBOT_OBS_DIM} + one-hot 5 + payload 12 + phases 2 = {OBS_DIM})")

# The pickup phase clock ramps p_contact over the first 2 s, then p_lift.
cmd = PickUpCommand(
    box_obs=BoxObservation(dims=world.box.dims, mass=world.box.mass,
                           start_pos=world.box.pos, start_yaw=0.0),
    target_pos=np.array([0.45, 0.0, 1.25]))
clock = PhaseClock()
print("\nphase clock:")
for _ in range(4):
    print(f"  t={clock.t:3d}  p_contact={clock.p_contact:.2f}  p_lift={clock.p_lift:.2f}")
    for _ in range(75):
        clock = advance_clock(clock)

# Observation noise perturbs only the robot block.
noisy = assemble_observation(r, StandCommand(), PhaseClock(), 1.0, rng)
clean = assemble_observation(r, StandCommand(), PhaseClock(), 0.0, rng)
print("\nnoise reaches the robot entries only:",
      bool(np.any(noisy[:ROBOT_OBS_DIM] != clean[:ROBOT_OBS_DIM])
           and np.all(noisy[ROBOT_OBS_DIM:] == clean[ROBOT_OBS_DIM:])))
