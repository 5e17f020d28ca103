import dataclasses

import numpy as np
import pytest

from boxloco.geom import quat_from_yaw, quat_mul, quat_rotate
from boxloco.physics import (ContactForce, SpawnError, World, WorldParams, contact_forces,
                             make_neutral_world, neutral_setpoints, spawn_world,
                             step_policy_tick, step_policy_tick_recorded, step_substeps)
from boxloco.scenarios import ScenarioSpec, sample_pickup_scenario
from boxloco.world import SkillId
import boxloco._kernel as K

SP = neutral_setpoints()


def drop_world(height=0.5, mass=5.0, dims=(0.3, 0.3, 0.3), table=0.8):
    return make_neutral_world(box_pos=(0.45, 0.0, table + height + dims[2] / 2),
                              box_dims=dims, box_mass=mass, table_top=table)


class TestFreeFallAndSettling:
    def test_fall_time_matches_closed_form(self):
        w = drop_world(height=0.5)
        expected = np.sqrt(2 * 0.5 / 9.81)
        touch = None
        for _ in range(100):
            w = step_policy_tick(w, SP)
            if touch is None and w.box.contact_table:
                touch = w.time
        assert touch is not None
        assert abs(touch - expected) <= 0.02 + 1e-9  # one policy tick

    def test_settles_to_static_weight(self):
        w = drop_world(height=0.5, mass=5.0)
        for _ in range(100):
            w = step_policy_tick(w, SP)
        assert abs(w.box.force_table[2] - 5.0 * 9.81) / (5.0 * 9.81) < 0.02
        assert np.linalg.norm(w.box.linvel) < 1e-3

    def test_resting_box_stays_quiet_after_one_second(self):
        w = drop_world(height=0.0, mass=8.0)
        for _ in range(50):
            w = step_policy_tick(w, SP)
        assert np.linalg.norm(w.box.linvel) < 1e-3


class TestContactFormula:
    def test_zero_penetration_zero_force(self):
        w = make_neutral_world(box_pos=(5.0, 0.0, 1.0), box_dims=(0.3, 0.3, 0.3))
        pairs = {c.pair: c for c in contact_forces(w)}
        assert pairs["box-ground"].normal == 0.0
        assert pairs["box-table"].normal == 0.0

    def test_single_corner_formula_value(self):
        # tilt the box about two axes so exactly one corner is lowest and
        # penetrates the ground by 1 mm
        dims = np.array([0.3, 0.3, 0.3])
        w = make_neutral_world(box_pos=(5.0, 0.0, 0.5), box_dims=dims, box_mass=2.0)
        qr = np.array([np.cos(0.1), np.sin(0.1), 0.0, 0.0])
        qp = np.array([np.cos(0.15), 0.0, np.sin(0.15), 0.0])
        q = quat_mul(qr, qp)
        corners = [quat_rotate(q, np.array([sx, sy, sz]) * dims / 2)
                   for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
        lowest = min(c[2] for c in corners)
        box = dataclasses.replace(w.box, quat=q,
                                  pos=np.array([5.0, 0.0, -lowest - 0.001]),
                                  linvel=np.zeros(3), angvel=np.zeros(3))
        w = w.with_updates(box=box)
        pairs = {c.pair: c for c in contact_forces(w)}
        assert pairs["box-ground"].normal == pytest.approx(20000.0 * 0.001, rel=1e-9)
        assert pairs["box-ground"].penetration == pytest.approx(0.001, abs=1e-12)

    def test_static_box_equilibrium(self):
        w = drop_world(height=0.0, mass=5.0)
        for _ in range(75):
            w = step_policy_tick(w, SP)
        pairs = {c.pair: c for c in contact_forces(w)}
        table = pairs["box-table"]
        assert abs(table.normal - 5.0 * 9.81) / (5.0 * 9.81) < 0.01
        assert np.linalg.norm(table.tangent) < 0.05 * table.normal


class TestSpawn:
    def test_ground_spawn_contacts_ground(self):
        spec = ScenarioSpec(skill=SkillId.PickUp, seed=0,
                            box_pos=np.array([0.45, 0.0, 0.0]), box_yaw=0.0,
                            box_dims=np.array([0.3, 0.3, 0.3]), box_mass=3.0,
                            target_pos=np.array([0.45, 0.0, 0.5]))
        w = spawn_world(spec)
        assert w.box.contact_ground
        assert not w.box.contact_table
        assert w.table_pose[2] == 0.0

    def test_table_spawn_contacts_table(self):
        spec = ScenarioSpec(skill=SkillId.PickUp, seed=0,
                            box_pos=np.array([0.4, 0.0, 0.8]), box_yaw=0.0,
                            box_dims=np.array([0.3, 0.3, 0.3]), box_mass=3.0,
                            target_pos=np.array([0.4, 0.0, 1.0]))
        w = spawn_world(spec)
        assert w.box.contact_table
        assert not w.box.contact_ground
        assert w.table_pose[2] == pytest.approx(0.8)

    def test_same_spec_spawns_identical_worlds(self):
        rng = np.random.default_rng(7)
        spec = sample_pickup_scenario(rng)
        a = spawn_world(spec)
        b = spawn_world(spec)
        assert np.array_equal(a.sim, b.sim)
        assert np.array_equal(a.params_arr, b.params_arr)

    def test_neutral_stance_matches_stand_targets(self):
        w = make_neutral_world()
        r = w.robot
        assert r.base_pos[2] == pytest.approx(0.9)
        assert (r.foot_pos_L[1] - r.foot_pos_R[1]) == pytest.approx(0.385)
        assert r.foot_contact_L and r.foot_contact_R


class TestDeterminismAndStability:
    def test_bit_identical_trajectories(self):
        rng = np.random.default_rng(0)
        actions = rng.uniform(-0.1, 0.1, size=(50, 12))
        finals = []
        for _ in range(2):
            w = drop_world(height=0.2, mass=3.0)
            for a in actions:
                w = step_policy_tick(w, SP + a)
            finals.append(w.sim.copy())
        assert np.array_equal(finals[0], finals[1])

    def test_balanced_robot_cop_at_foot_average(self):
        w = make_neutral_world()
        sp = w.robot.actuator_pos.copy()
        for _ in range(50):
            w = step_policy_tick(w, sp)
        favg = 0.5 * (w.robot.foot_pos_L[:2] + w.robot.foot_pos_R[:2])
        assert np.linalg.norm(w.robot.cop - favg) < 1e-3

    def test_zero_gravity_no_contact_momentum_conserved(self):
        params = WorldParams(gravity=0.0, pd_kp=np.zeros(12), pd_kd=np.zeros(12))
        w = make_neutral_world(params=params, box_pos=(5.0, 5.0, 3.0),
                               box_dims=(0.3, 0.3, 0.3), box_mass=2.0)
        box = dataclasses.replace(w.box, linvel=np.array([0.3, -0.2, 0.1]))
        w = w.with_updates(box=box)
        p0 = 2.0 * w.box.linvel
        w, _ = step_substeps(w, SP, 1000)
        assert np.max(np.abs(2.0 * w.box.linvel - p0)) < 1e-10

    def test_friction_cone_on_rollout_records(self):
        rng = np.random.default_rng(1)
        w = drop_world(height=0.3, mass=4.0)
        mu = w.params.friction_mu
        for _ in range(40):
            w, recs = step_policy_tick_recorded(w, SP + rng.uniform(-0.05, 0.05, 12))
            normals = recs[:, :, 0]
            tangents = np.sqrt(recs[:, :, 1] ** 2 + recs[:, :, 2] ** 2)
            assert np.all(tangents <= mu * normals + 1e-6)

    def test_penetration_bounded_under_scenario_loads(self):
        # settled scenario spawns plus random mild policy motion; the 10 mm
        # budget is for in-distribution loads, not high drops
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(10):
            spec = sample_pickup_scenario(rng)
            w = spawn_world(spec)
            sp = w.robot.actuator_pos.copy()
            for _ in range(40):
                w, recs = step_policy_tick_recorded(w, sp + rng.uniform(-0.1, 0.1, 12))
                worst = max(worst, float(np.max(recs[:, :, 3])))
        assert worst <= 0.010

    @staticmethod
    def _box_energy(world, kn, table_top, m, inertia, dims, dt):
        # discrete energy of the symplectic scheme: instantaneous KE/PE plus
        # the staggered spring cross-term (dt/2 * F_spring . v_corner)
        b = world.box
        ke = 0.5 * m * np.dot(b.linvel, b.linvel) + 0.5 * float(np.dot(inertia, b.angvel ** 2))
        pe = m * 9.81 * b.pos[2]
        spring = 0.0
        cross = 0.0
        for sx in (-1, 1):
            for sy in (-1, 1):
                for sz in (-1, 1):
                    r = quat_rotate(b.quat, np.array([sx, sy, sz]) * dims / 2)
                    d = table_top - (b.pos + r)[2]
                    if 0 < d < 0.2:
                        vcz = b.linvel[2] + np.cross(b.angvel, r)[2]
                        spring += 0.5 * kn * d * d
                        cross += 0.5 * dt * kn * d * vcz
        return ke + pe + spring + cross

    def test_passive_box_energy_non_increasing_while_settling(self):
        # equilibrium spawn with a small disturbance: dissipation only
        sink = 2.0 * 9.81 / (4 * 20000.0)
        w = make_neutral_world(box_pos=(0.45, 0.0, 0.95 - sink), box_dims=(0.3, 0.3, 0.3),
                               box_mass=2.0, table_top=0.8)
        box = dataclasses.replace(w.box, linvel=np.array([0.02, 0.01, 0.05]),
                                  angvel=np.array([0.05, 0.02, 0.1]))
        w = w.with_updates(box=box)
        m, dims = 2.0, w.box.dims
        inertia = m / 12.0 * np.array([dims[1] ** 2 + dims[2] ** 2,
                                       dims[0] ** 2 + dims[2] ** 2,
                                       dims[0] ** 2 + dims[1] ** 2])
        args = (w.params.contact_stiffness, 0.8, m, inertia, dims, w.params.dt_inner)
        prev = None
        for _ in range(2000):
            w, _ = step_substeps(w, SP, 1)
            e = self._box_energy(w, *args)
            if prev is not None:
                assert e <= prev + 1e-4
            prev = e

    def test_impact_dissipates_energy_overall(self):
        # a real drop: individual impact substeps may wiggle at O(dt^2), but
        # the contact must be strongly dissipative end to end
        w = drop_world(height=0.15, mass=2.0)
        m, dims = 2.0, w.box.dims
        inertia = m / 12.0 * np.array([dims[1] ** 2 + dims[2] ** 2,
                                       dims[0] ** 2 + dims[2] ** 2,
                                       dims[0] ** 2 + dims[1] ** 2])
        args = (w.params.contact_stiffness, 0.8, m, inertia, dims, w.params.dt_inner)
        e0 = self._box_energy(w, *args)
        gained = 0.0
        prev = e0
        for _ in range(1500):
            w, _ = step_substeps(w, SP, 1)
            e = self._box_energy(w, *args)
            gained += max(0.0, e - prev)
            prev = e
        dissipated = e0 - prev
        assert dissipated > 0.9 * (m * 9.81 * 0.15)   # most of the drop energy gone
        assert gained < 0.01 * dissipated             # spurious gains are negligible

    def test_numerical_fault_on_bad_setpoints(self):
        from boxloco.physics import NumericalFault
        w = make_neutral_world()
        with pytest.raises(NumericalFault):
            step_policy_tick(w, np.full(12, np.nan))


class TestWorldParams:
    def test_tick_consistency_enforced(self):
        with pytest.raises(ValueError):
            WorldParams(dt_inner=0.001, substeps_per_policy_tick=10)

    def test_time_advances_by_tick(self):
        w = make_neutral_world()
        w2 = step_policy_tick(w, SP)
        assert w2.time - w.time == pytest.approx(0.02)

    def test_setpoints_saturate_at_actuator_limits(self):
        # commanded far outside the workspace, the hand stops at its limit
        w = make_neutral_world()
        sp = SP.copy()
        sp[7] = 5.0   # left hand y, far beyond reach
        sp[2] = 3.0   # base height command beyond the leg range
        for _ in range(100):
            w = step_policy_tick(w, sp)
        assert w.robot.actuator_pos[7] <= 0.9
        assert w.robot.base_pos[2] <= 1.2

    def test_hand_box_grip_supports_weight(self):
        # squeezing setpoints inside the faces must let friction carry the box
        w = make_neutral_world(box_pos=(0.3, 0.0, 1.1), box_dims=(0.3, 0.3, 0.3),
                               box_mass=3.0)
        r = w.robot
        lat = np.array([0.0, 1.0, 0.0])
        hand_l = w.box.pos + 0.149 * lat
        hand_r = w.box.pos - 0.149 * lat
        robot = dataclasses.replace(r, hand_pos_L=hand_l, hand_pos_R=hand_r)
        w = w.with_updates(robot=robot)
        sp = SP.copy()
        # hand setpoints well inside the box: sustained squeeze
        sp[6:9] = [0.3, 0.0, 1.1 - 0.9]
        sp[9:12] = [0.3, 0.0, 1.1 - 0.9]
        sp[7] = 0.15 - 0.25
        sp[10] = -(0.15 - 0.25)
        z0 = w.box.pos[2]
        for _ in range(50):
            w = step_policy_tick(w, sp)
        assert w.box.contact_hand_L and w.box.contact_hand_R
        assert w.box.pos[2] > z0 - 0.25  # held, not in free fall (0.3 m drop in 1 s)
        assert not w.box.contact_ground
