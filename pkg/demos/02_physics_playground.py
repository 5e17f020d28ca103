"""Penalty-contact physics at work: a box drop, a standing robot, and a
scripted two-hand squeeze-and-lift.

Run:  python3 demos/02_physics_playground.py
"""
import numpy as np

from boxloco.physics import (contact_forces, make_neutral_world, neutral_setpoints,
                             step_policy_tick)

SP = neutral_setpoints()

# --- 1. drop a 5 kg box half a meter onto the table ------------------------
world = make_neutral_world(box_pos=(0.45, 0.0, 0.8 + 0.5 + 0.15),
                           box_dims=(0.3, 0.3, 0.3), box_mass=5.0, table_top=0.8)
touch = None
for _ in range(100):
    world = step_policy_tick(world, SP)
    if touch is None and world.box.contact_table:
        touch = world.time
print(f"box touched down at t={touch:.2f}s (closed form {np.sqrt(2*0.5/9.81):.3f}s)")
print(f"settled table force {world.box.force_table[2]:.1f} N vs weight {5*9.81:.1f} N")
for c in contact_forces(world):
    if c.normal > 0:
        print(f"  {c.pair:14s} N={c.normal:7.2f} N  depth={c.penetration*1000:.2f} mm")

# --- 2. the support model: cop tracks the demanded wrench ------------------
world = make_neutral_world()
sp = world.robot.actuator_pos.copy()
for _ in range(50):
    world = step_policy_tick(world, sp)
favg = 0.5 * (world.robot.foot_pos_L[:2] + world.robot.foot_pos_R[:2])
print(f"\nquiet stand: cop-to-foot-midpoint {np.linalg.norm(world.robot.cop - favg)*1000:.2f} mm")

lean = sp.copy()
lean[0] += 0.06   # command a 6 cm forward lean
for _ in range(50):
    world = step_policy_tick(world, lean)
print(f"leaning forward: cop moved {(world.robot.cop[0] - favg[0])*1000:+.1f} mm in x")

# --- 3. scripted pickup: squeeze the faces, then raise the hands -----------
world = make_neutral_world(box_pos=(0.4, 0.0, 0.95), box_dims=(0.3, 0.3, 0.3),
                           box_mass=2.0, table_top=0.8)
sp = world.robot.actuator_pos.copy()
box_xy = world.box.pos[:2]
# move hands to the transverse faces at box mid-height
sp[6:9] = [box_xy[0], 0.18, 0.95 - 0.9]
sp[9:12] = [box_xy[0], -0.18, 0.95 - 0.9]
for _ in range(60):
    world = step_policy_tick(world, sp)
# squeeze: drive the setpoints into the box, then lift
sp[7] -= 0.10
sp[10] += 0.10
for _ in range(20):
    world = step_policy_tick(world, sp)
print(f"\nafter squeeze: contacts L={world.box.contact_hand_L} R={world.box.contact_hand_R}, "
      f"grip force {np.linalg.norm(world.box.force_hand_L):.1f} N/hand")
for k in range(60):
    sp[8] += 0.005
    sp[11] += 0.005
    world = step_policy_tick(world, sp)
print(f"box center height after lifting: {world.box.pos[2]:.3f} m "
      f"(started at 0.95, off table: {not world.box.contact_table})")
