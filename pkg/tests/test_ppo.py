import dataclasses
import json
import os

import numpy as np
import pytest

from boxloco.envs import SkillEnv
from boxloco.policy import HiddenState, PolicyParams, forward
from boxloco.ppo import (EvalReport, Optimizer, TrainConfig, build_env, clip_grad_norm,
                         collect_rollouts, episodes_to_windows, evaluate, find_limits,
                         gae, init_policy, ppo_update, run_episode, train)
from boxloco.world import ActionMode, SkillId, N_ACTUATORS, OBS_DIM


def gae_bruteforce(rewards, values, gamma, lam, terminated, bootstrap):
    """Literal nested-sum oracle: A_t = sum_l (gamma*lam)^l * delta_{t+l}."""
    T = len(rewards)
    vals = list(values) + [0.0 if terminated else bootstrap]
    deltas = [rewards[t] + gamma * vals[t + 1] - vals[t] for t in range(T)]
    adv = []
    for t in range(T):
        acc = 0.0
        for l in range(T - t):
            acc += (gamma * lam) ** l * deltas[t + l]
        adv.append(acc)
    returns = [adv[t] + values[t] for t in range(T)]
    return np.array(adv), np.array(returns)


class TestGAE:
    def test_reward_to_go_case(self):
        r = np.array([1.0, 2.0, 3.0])
        v = np.zeros(3)
        adv, ret = gae(r, v, gamma=1.0, lam=1.0, terminated=True)
        assert np.allclose(adv, [6.0, 5.0, 3.0])
        assert np.allclose(ret, adv)

    def test_single_terminal_step(self):
        adv, ret = gae(np.array([1.0]), np.array([0.0]), 0.99, 0.95, terminated=True)
        assert adv[0] == pytest.approx(1.0)
        assert ret[0] == pytest.approx(1.0)

    def test_truncation_bootstraps_value(self):
        adv, _ = gae(np.array([0.0]), np.array([0.0]), 0.5, 1.0,
                     terminated=False, bootstrap_value=2.0)
        assert adv[0] == pytest.approx(1.0)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            T = 10
            r = rng.standard_normal(T)
            v = rng.standard_normal(T)
            gamma = rng.uniform(0.5, 1.0)
            lam = rng.uniform(0.5, 1.0)
            terminated = bool(rng.integers(0, 2))
            boot = float(rng.standard_normal())
            a1, r1 = gae(r, v, gamma, lam, terminated, boot)
            a2, r2 = gae_bruteforce(r, v, gamma, lam, terminated, boot)
            assert np.max(np.abs(a1 - a2)) < 1e-10
            assert np.max(np.abs(r1 - r2)) < 1e-10

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            gae(np.zeros(3), np.zeros(4), 0.99, 0.95)


def scripted_policy(config, bias):
    """Policy with zeroed trunks and a fixed head bias: constant mean action."""
    params = init_policy(config)
    for name, arr in params.named_arrays():
        if name not in ("log_std", "neutral_offsets"):
            arr[...] = 0.0
    params.actor_head["b"][...] = bias
    params.log_std[...] = -10.0  # clamped to -3: nearly deterministic
    return params


class TestCollection:
    def test_batch_accounting_exact_quota(self):
        config = TrainConfig(skill=SkillId.Stand, workers=1, steps_per_iteration=100,
                             seed=3)
        params = init_policy(config)
        episodes = collect_rollouts(params, config)
        total = sum(len(ep["obs"]) for ep in episodes)
        assert 100 <= total < 100 + 400

    def test_scripted_fall_records_length_and_reason(self):
        config = TrainConfig(skill=SkillId.Stand, workers=1, seed=0)
        params = scripted_policy(config, bias=0.0)
        # hard lean command tips the robot over quickly
        params.actor_head["b"][3] = 3.0
        params.actor_head["b"][4] = 3.0
        env = build_env(config)
        rec = run_episode(env, params, 1, np.random.default_rng(0))
        assert rec["terminated"]
        assert rec["reason"] in ("torso_pitch", "torso_roll", "torso_low", "foot_off_ground")
        assert len(rec["obs"]) == len(rec["reward"]) > 0

    def test_same_seed_identical_batch(self):
        config = TrainConfig(skill=SkillId.PickUp, workers=1, steps_per_iteration=60,
                             seed=17)
        params = init_policy(config)
        a = collect_rollouts(params, config, iteration=0)
        b = collect_rollouts(params, config, iteration=0)
        assert len(a) == len(b)
        for ea, eb in zip(a, b):
            assert np.array_equal(ea["obs"], eb["obs"])
            assert np.array_equal(ea["reward"], eb["reward"])

    def test_hidden_snapshots_align_with_windows(self):
        config = TrainConfig(skill=SkillId.Stand, workers=1, steps_per_iteration=70, seed=2)
        params = init_policy(config)
        episodes = collect_rollouts(params, config)
        windows = episodes_to_windows(episodes, config)
        for w in windows:
            assert len(w["obs"]) <= 32
            assert w["h0"].shape == (8, params.hidden)


class TestPPOUpdate:
    def _windows(self, config, params):
        episodes = collect_rollouts(params, config)
        return episodes_to_windows(episodes, config)

    def test_zero_advantages_leave_params_unchanged(self):
        config = TrainConfig(skill=SkillId.Stand, workers=1, steps_per_iteration=64,
                             seed=5, value_coef=0.0, epochs_per_iteration=1)
        params = init_policy(config)
        windows = self._windows(config, params)
        for w in windows:
            w["adv"] = np.zeros_like(w["adv"])
        new_params, stats = ppo_update(params, windows, config)
        assert not stats["aborted"]
        for (_, a), (_, b) in zip(params.named_arrays(), new_params.named_arrays()):
            assert np.allclose(a, b, atol=1e-12)

    def test_clipped_sample_contributes_no_policy_gradient(self):
        # ratio forced to 1.5 with positive advantage: the clipped branch is
        # active, so the policy term's gradient must vanish
        config = TrainConfig(skill=SkillId.Stand, workers=1, steps_per_iteration=40,
                             seed=6, value_coef=0.0, epochs_per_iteration=1,
                             clip_epsilon=0.2)
        params = init_policy(config)
        windows = self._windows(config, params)
        for w in windows:
            w["adv"] = np.ones_like(w["adv"])
            w["logp"] = w["logp"] - np.log(1.5)  # new/old ratio becomes 1.5
        new_params, stats = ppo_update(params, windows, config)
        assert stats["clip_fraction"] == pytest.approx(1.0)
        for (_, a), (_, b) in zip(params.named_arrays(), new_params.named_arrays()):
            assert np.allclose(a, b, atol=1e-12)

    def test_update_moves_params_with_signal(self):
        config = TrainConfig(skill=SkillId.Stand, workers=1, steps_per_iteration=64,
                             seed=7, epochs_per_iteration=1)
        params = init_policy(config)
        windows = self._windows(config, params)
        new_params, stats = ppo_update(params, windows, config)
        assert not stats["aborted"]
        moved = sum(float(np.sum(np.abs(a - b)))
                    for (_, a), (_, b) in zip(params.named_arrays(), new_params.named_arrays()))
        assert moved > 0

    def test_abort_on_nonfinite(self):
        config = TrainConfig(skill=SkillId.Stand, workers=1, steps_per_iteration=40, seed=8)
        params = init_policy(config)
        windows = self._windows(config, params)
        windows[0]["ret"] = windows[0]["ret"] + np.nan
        new_params, stats = ppo_update(params, windows, config)
        assert stats["aborted"]
        assert new_params is params

    def test_grad_clip_exact(self):
        g = {"a": np.full(4, 5.0), "b": np.full(9, 5.0)}  # norm sqrt(13*25) > 10
        norm = clip_grad_norm(g, 0.5)
        clipped = np.sqrt(sum(float(np.sum(v * v)) for v in g.values()))
        assert clipped == pytest.approx(0.5, abs=1e-9)
        assert norm > 0.5

    def test_sgd_step_norm_bound(self):
        config = TrainConfig(skill=SkillId.Stand, workers=1, steps_per_iteration=48,
                             seed=9, optimizer="sgd", epochs_per_iteration=2)
        params = init_policy(config)
        windows = self._windows(config, params)
        updates = config.epochs_per_iteration * int(np.ceil(len(windows) / config.minibatch_windows))
        new_params, stats = ppo_update(params, windows, config)
        delta = np.sqrt(sum(float(np.sum((a - b) ** 2))
                            for (_, a), (_, b) in zip(params.named_arrays(),
                                                      new_params.named_arrays())))
        bound = config.learning_rate * config.grad_clip_norm * max(stats["updates"], updates)
        assert delta <= bound + 1e-12


class TestTrainLoop:
    def test_smoke_run_emits_artifacts(self, tmp_path):
        config = TrainConfig(skill=SkillId.Stand, workers=1, iterations=2,
                             steps_per_iteration=40, seed=1, checkpoint_every=1,
                             out_dir=str(tmp_path / "run"))
        summary = train(config)
        csv_path = summary["csv"]
        lines = open(csv_path).read().strip().splitlines()
        assert len(lines) == 3  # header + 2 iterations
        assert "success_rate" in lines[0]
        assert os.path.exists(summary["checkpoint"])
        meta = json.load(open(os.path.join(config.out_dir, "run_metadata.json")))
        assert meta["config"]["skill"] == "Stand"

    def test_ablation_flags_recorded_and_applied(self, tmp_path):
        config = TrainConfig(skill=SkillId.PickUp, workers=1, iterations=1,
                             steps_per_iteration=30, seed=2, absolute_action_space=True,
                             no_hand_trajectory=True, out_dir=str(tmp_path / "abl"))
        train(config)
        meta = json.load(open(os.path.join(config.out_dir, "run_metadata.json")))
        assert meta["config"]["absolute_action_space"] is True
        assert meta["config"]["no_hand_trajectory"] is True
        env = build_env(config)
        assert env.action_mode == ActionMode.Absolute
        assert env.static_hand_targets is True

    def test_single_worker_training_is_seed_reproducible(self, tmp_path):
        outs = []
        for run in ("a", "b"):
            config = TrainConfig(skill=SkillId.Stand, workers=1, iterations=2,
                                 steps_per_iteration=40, seed=11, checkpoint_every=2,
                                 out_dir=str(tmp_path / run))
            summary = train(config)
            outs.append((open(summary["csv"]).read(),
                         open(summary["checkpoint"], "rb").read()))
        assert outs[0][0] == outs[1][0]
        assert outs[0][1] == outs[1][1]

    def test_resume_continues_iteration_count(self, tmp_path):
        out = str(tmp_path / "resume")
        config = TrainConfig(skill=SkillId.Stand, workers=1, iterations=2,
                             steps_per_iteration=30, seed=3, checkpoint_every=1,
                             out_dir=out)
        train(config)
        config2 = dataclasses.replace(config, iterations=3)
        summary = train(config2, resume=True)
        assert summary["iterations_run"] == 1


class AlwaysSucceedsEnv(SkillEnv):
    """Fixture: a pickup episode that trivially succeeds with zero error."""

    def __init__(self):
        super().__init__(SkillId.PickUp, noise_scale=0.0, randomize_dynamics=False,
                         randomize_box_obs=False, horizon=3)

    def step(self, action):
        res = super().step(action)
        if self.clock.t >= self.horizon:
            return dataclasses.replace(res, done=True, terminated=False, reason=None)
        return dataclasses.replace(res, done=False, terminated=False, reason=None)

    def episode_outcome(self, terminated):
        return {"success": True, "error_m": 0.0, "box_held": True}


class TestEvaluate:
    def test_always_falling_policy_scores_zero(self):
        config = TrainConfig(skill=SkillId.Stand, workers=1)
        params = scripted_policy(config, bias=0.0)
        params.actor_head["b"][3] = 3.0
        report = evaluate(params, SkillId.Stand, n_episodes=5, seed=0, config=config)
        assert report.success_rate == 0.0
        assert sum(report.termination_reasons.values()) == 5

    def test_perfect_fixture_scores_one_with_zero_error(self):
        config = TrainConfig(skill=SkillId.PickUp, workers=1)
        params = scripted_policy(config, bias=0.0)
        report = evaluate(params, SkillId.PickUp, n_episodes=4, seed=1,
                          env=AlwaysSucceedsEnv())
        assert report.success_rate == 1.0
        assert report.mean_error_cm == pytest.approx(0.0)

    def test_requires_at_least_one_episode(self):
        config = TrainConfig(skill=SkillId.Stand, workers=1)
        params = init_policy(config)
        with pytest.raises(ValueError):
            evaluate(params, SkillId.Stand, n_episodes=0)


class TestFindLimits:
    def test_analytic_threshold_recovered_within_step(self):
        threshold = 8.3
        result = find_limits(None, "mass", step_size=0.5,
                             success_fn=lambda value, seed: value < threshold)
        assert not result["failed_at_mean"]
        assert result["max_passing_value"] <= threshold
        assert threshold - result["max_passing_value"] <= 0.5 + 1e-12

    def test_degenerate_policy_flags_failure_at_mean(self):
        result = find_limits(None, "mass", step_size=0.5,
                             success_fn=lambda value, seed: False)
        assert result["failed_at_mean"]
        assert result["max_passing_value"] == pytest.approx(5.5)

    def test_frontier_is_monotone_by_construction(self):
        result = find_limits(None, "size", step_size=0.05,
                             success_fn=lambda value, seed: value < 0.5)
        passed = [f["passed"] for f in result["frontier"]]
        assert all(passed[:-1]) and not passed[-1]

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ValueError):
            find_limits(None, "wingspan", 0.1, success_fn=lambda v, s: True)
