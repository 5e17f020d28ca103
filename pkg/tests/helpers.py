"""Shared fixtures: randomized worlds and pickup reward inputs."""
import dataclasses

import numpy as np

from boxloco.geom import quat_from_yaw, quat_normalize
from boxloco.physics import World, make_neutral_world
from boxloco.rewards import build_hand_trajectory
from boxloco.world import (Action, ActionMode, BoxObservation, BoxState, PhaseClock,
                           PickUpCommand, N_ACTUATORS)


def random_quat(rng, max_tilt=0.4):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_tilt, max_tilt)
    q = np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])
    return quat_normalize(q)


def random_pickup_world(rng, heading=None):
    """A structurally valid world with aggressively randomized state fields;
    rewards are pure functions so dynamical consistency is not required."""
    heading = rng.uniform(-np.pi, np.pi) if heading is None else heading
    dims = rng.uniform(0.2, 0.45, size=3)
    bottom = rng.uniform(0.0, 1.3)
    world = make_neutral_world(
        heading=heading,
        origin=rng.uniform(-2, 2, size=2),
        box_pos=(0.45, 0.0, bottom + dims[2] / 2),
        box_dims=dims,
        box_mass=rng.uniform(1, 10),
        table_top=bottom if bottom > 0.05 else 0.0,
    )
    r = world.robot
    robot = dataclasses.replace(
        r,
        base_pos=r.base_pos + rng.uniform(-0.2, 0.2, size=3),
        base_quat=random_quat(rng),
        base_linvel=rng.uniform(-1, 1, size=3),
        base_angvel=rng.uniform(-1, 1, size=3),
        hand_pos_L=r.hand_pos_L + rng.uniform(-0.3, 0.3, size=3),
        hand_pos_R=r.hand_pos_R + rng.uniform(-0.3, 0.3, size=3),
        hand_vel_L=rng.uniform(-1.5, 1.5, size=3),
        hand_vel_R=rng.uniform(-1.5, 1.5, size=3),
        foot_vel_L=rng.uniform(-0.2, 0.2, size=3),
        foot_vel_R=rng.uniform(-0.2, 0.2, size=3),
        cop=r.cop + rng.uniform(-0.1, 0.1, size=2),
        actuator_vel=rng.uniform(-1, 1, size=N_ACTUATORS),
        actuator_force=rng.uniform(-50, 50, size=N_ACTUATORS),
    )
    b = world.box
    box = dataclasses.replace(
        b,
        pos=b.pos + rng.uniform(-0.3, 0.3, size=3),
        quat=random_quat(rng),
        linvel=rng.uniform(-1, 1, size=3),
        angvel=rng.uniform(-1, 1, size=3),
        linacc=rng.uniform(-5, 5, size=3),
        contact_hand_L=bool(rng.integers(0, 2)),
        contact_hand_R=bool(rng.integers(0, 2)),
        contact_table=bool(rng.integers(0, 2)),
        contact_ground=bool(rng.integers(0, 2)),
        force_hand_L=rng.uniform(-30, 30, size=3),
        force_hand_R=rng.uniform(-30, 30, size=3),
        force_table=np.zeros(3),
    )
    if box.contact_table:
        box = dataclasses.replace(box, force_table=rng.uniform(-5, 60, size=3))
    world = world.with_updates(robot=robot, box=box)
    return world.with_flags(self_collision=bool(rng.integers(0, 4) == 0))


def random_pickup_inputs(rng):
    """(world, cmd, clock, traj, action, prev_action) for oracle checks."""
    world = random_pickup_world(rng)
    obs = BoxObservation(
        dims=rng.uniform(0.2, 0.45, size=3),
        mass=rng.uniform(1, 10),
        start_pos=np.array([rng.uniform(0.3, 0.6), rng.uniform(-0.3, 0.3),
                            rng.uniform(0.2, 1.4)]),
        start_yaw=rng.uniform(-0.4, 0.4),
    )
    target = np.array([rng.uniform(0.3, 0.6), rng.uniform(-0.3, 0.3),
                       rng.uniform(0.3, 1.5)])
    cmd = PickUpCommand(box_obs=obs, target_pos=target)
    clock = PhaseClock(t=int(rng.integers(0, 300)))
    hands = (world.robot.hand_pos_L, world.robot.hand_pos_R)
    obs_w = BoxObservation(dims=obs.dims, mass=obs.mass,
                           start_pos=world.ref_to_world(obs.start_pos),
                           start_yaw=obs.start_yaw + world.ref_yaw)
    traj = build_hand_trajectory(obs_w, world.ref_to_world(target), hands)
    action = Action(rng.uniform(-0.5, 0.5, size=N_ACTUATORS), ActionMode.Relative)
    prev = Action(rng.uniform(-0.5, 0.5, size=N_ACTUATORS), ActionMode.Relative)
    return world, cmd, clock, traj, action, prev
