"""Independent straight-line re-implementation of the pickup reward used as
the acceptance oracle. Deliberately shares no code with boxloco.rewards:
every term, weight, gate, and penalty is written out inline from scratch,
reading only raw state fields.
"""
import numpy as np


def _yaw_of_quat(q):
    w, x, y, z = q
    return np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def _roll_pitch_of_quat(q):
    w, x, y, z = q
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2.0 * (w * y - z * x), -1.0, 1.0))
    return roll, pitch


def pickup_total_reward_oracle(world, cmd, clock, traj, action, prev_action):
    """Composed pickup reward for one step, straight from the formulas."""
    robot = world.robot
    box = world.box
    t = clock.t

    # piecewise-linear hand targets through (start, goal1@75, goal2@100, goal3@175)
    times = [0.0, 75.0, 100.0, 175.0]
    tq = min(float(t), 175.0)
    target_l = np.array([np.interp(tq, times, [traj.start_L[i], traj.goal1_L[i],
                                               traj.goal2_L[i], traj.goal3_L[i]])
                         for i in range(3)])
    target_r = np.array([np.interp(tq, times, [traj.start_R[i], traj.goal1_R[i],
                                               traj.goal2_R[i], traj.goal3_R[i]])
                         for i in range(3)])
    r_hand_pos = (np.sqrt(np.sum((robot.hand_pos_L - target_l) ** 2))
                  + np.sqrt(np.sum((robot.hand_pos_R - target_r) ** 2)))

    # hand roll: tilt of the segment between the point hands, charged per hand
    seg = robot.hand_pos_L - robot.hand_pos_R
    horiz = np.sqrt(seg[0] ** 2 + seg[1] ** 2)
    if horiz < 1e-9 and abs(seg[2]) < 1e-9:
        r_hand_roll = 0.0
    else:
        r_hand_roll = 2.0 * abs(np.arctan2(seg[2], horiz))

    # box target: hold at the start, then ramp to the commanded target over
    # the lift phase; positions come from the scenario frame
    ref_yaw = world.ref_yaw
    ref_xy = world.ref_origin
    c, s = np.cos(ref_yaw), np.sin(ref_yaw)

    def ref_to_world(p):
        return np.array([ref_xy[0] + c * p[0] - s * p[1],
                         ref_xy[1] + s * p[0] + c * p[1],
                         p[2]])

    start_w = ref_to_world(cmd.box_obs.start_pos)
    target_w = ref_to_world(cmd.target_pos)
    if t <= 100:
        box_target = start_w
    else:
        frac = min((t - 100) / 75.0, 1.0)
        box_target = start_w + frac * (target_w - start_w)
    r_box_pos = np.sqrt(np.sum((box.pos - box_target) ** 2))

    b_roll, b_pitch = _roll_pitch_of_quat(box.quat)
    r_box_orient = abs(b_roll) + abs(b_pitch)
    r_table = np.sqrt(np.sum(box.force_table ** 2))

    favg = 0.5 * (robot.foot_pos_L[:2] + robot.foot_pos_R[:2])
    r_cop = np.sqrt(np.sum((robot.cop - favg) ** 2))

    # torso orientation measured against the scenario heading
    qw, qx, qy, qz = robot.base_quat
    hw, hz = np.cos(-ref_yaw / 2), np.sin(-ref_yaw / 2)
    rel_w = hw * qw - hz * qz
    r_base_orient = 1.0 - rel_w ** 2

    # foot "orientation": the stance line should run along the scenario +y
    d = robot.foot_pos_L[:2] - robot.foot_pos_R[:2]
    if np.sqrt(np.sum(d ** 2)) < 1e-9:
        r_foot_orient = 0.0
    else:
        line_yaw = np.arctan2(d[1], d[0]) - np.pi / 2
        delta = np.arctan2(np.sin(line_yaw - ref_yaw), np.cos(line_yaw - ref_yaw))
        r_foot_orient = 2.0 * (1.0 - np.cos(delta / 2.0) ** 2)

    r_motor_vel = np.sqrt(np.sum(robot.actuator_vel ** 2))
    r_feet_vel = (np.sqrt(np.sum(robot.foot_vel_L ** 2))
                  + np.sqrt(np.sum(robot.foot_vel_R ** 2)))

    u_t = np.clip(action.deltas, -0.3, 0.3)
    u_prev = np.clip(prev_action.deltas, -0.3, 0.3)
    r_action = np.sqrt(np.sum((u_t - u_prev) ** 2))
    r_torque = np.sqrt(np.sum(robot.actuator_force ** 2))
    r_hand_force = (np.sqrt(np.sum(box.force_hand_L ** 2))
                    + np.sqrt(np.sum(box.force_hand_R ** 2)))
    r_box_acc = np.sqrt(np.sum(box.linacc ** 2))

    total = (0.15 * np.exp(-r_hand_pos)
             + 0.05 * np.exp(-r_hand_roll)
             + 0.15 * np.exp(-r_box_pos)
             + 0.05 * np.exp(-r_box_orient)
             + 0.05 * np.exp(-r_table)
             + 0.10 * np.exp(-r_cop)
             + 0.05 * np.exp(-r_base_orient)
             + 0.10 * np.exp(-r_foot_orient)
             + 0.05 * np.exp(-r_motor_vel)
             + 0.05 * np.exp(-r_feet_vel)
             + 0.05 * np.exp(-r_hand_force)
             + 0.05 * np.exp(-r_box_acc)
             + 0.05 * np.exp(-r_action)
             + 0.05 * np.exp(-r_torque))

    if t >= 100:
        total += 0.05 * (1.0 if box.contact_hand_L else 0.0)
        total += 0.05 * (1.0 if box.contact_hand_R else 0.0)

    if world.self_collision:
        total -= 0.1
    hand_speed = max(np.sqrt(np.sum(robot.hand_vel_L ** 2)),
                     np.sqrt(np.sum(robot.hand_vel_R ** 2)))
    if hand_speed > 1.0:
        total -= 0.1
    return float(total)
