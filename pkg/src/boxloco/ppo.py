"""PPO training for the skill policies: rollout collection (optionally
across worker processes), generalized advantage estimation, clipped
surrogate updates with hand-derived gradients, evaluation, and the
out-of-distribution limit search.
"""
from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from multiprocessing import get_context
from typing import Callable, Optional

import numpy as np

from . import scenarios as scn
from .envs import SkillEnv
from .physics import WorldParams, neutral_setpoints
from .policy import (BPTT_WINDOW, HiddenState, PolicyParams, backward, forward,
                     forward_window, gaussian_log_prob, sample_action, save_checkpoint,
                     load_checkpoint, zero_grads)
from .rewards import RewardWeights
from .world import ActionMode, OBS_DIM, SkillId, N_ACTUATORS


@dataclass
class TrainConfig:
    skill: SkillId = SkillId.PickUp
    iterations: int = 1000
    steps_per_iteration: int = 4096
    workers: int = 8
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    epochs_per_iteration: int = 4
    minibatch_windows: int = 32
    learning_rate: float = 3e-4
    grad_clip_norm: float = 0.5
    seed: int = 0
    initial_state_dataset: Optional[str] = None
    no_hand_trajectory: bool = False
    absolute_action_space: bool = False
    hidden_size: int = 64
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    optimizer: str = "adam"         # "adam" | "sgd" (sgd honors the strict
                                    # per-step parameter-norm bound exactly)
    noise_scale: float = 1.0
    randomize_dynamics: bool = True
    randomize_box_obs: bool = True
    # exploration init: quieter on the 6 base-pose channels than the hands
    # (a single -1.0 everywhere tips the robot before it can learn balance)
    log_std_init: tuple = (-2.0, -2.0, -2.0, -2.0, -2.0, -2.0,
                           -1.0, -1.0, -1.0, -1.0, -1.0, -1.0)
    pickup_ranges: dict = field(default_factory=dict)
    reward_weight_overrides: dict = field(default_factory=dict)
    world_param_overrides: dict = field(default_factory=dict)
    max_env_steps: int = 20_000_000
    checkpoint_every: int = 50
    stop_success_rate: Optional[float] = None
    stop_eval_episodes: int = 200
    stop_check_trigger: float = 0.7  # training-batch rate that triggers a full eval
    out_dir: str = "runs/run"

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0) or not (0.0 < self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be positive")
        if isinstance(self.skill, str):
            self.skill = SkillId(self.skill)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["skill"] = self.skill.value
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown train config keys: {sorted(unknown)}")
        return TrainConfig(**d)


@dataclass
class EvalReport:
    episodes: int
    success_rate: float
    mean_error_cm: Optional[float]    # box-involving skills, successes only
    termination_reasons: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def build_env(config: TrainConfig) -> SkillEnv:
    params = WorldParams(**config.world_param_overrides) if config.world_param_overrides else WorldParams()
    weights = RewardWeights().overridden(config.reward_weight_overrides)
    ranges = scn.PickupRanges(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in config.pickup_ranges.items()})
    source = None
    if config.initial_state_dataset:
        from .skills import StateDataset
        dataset = StateDataset.load(config.initial_state_dataset)
        source = dataset.sampler()
    return SkillEnv(
        config.skill,
        params=params,
        weights=weights,
        noise_scale=config.noise_scale,
        pickup_ranges=ranges,
        randomize_dynamics=config.randomize_dynamics,
        randomize_box_obs=config.randomize_box_obs,
        static_hand_targets=config.no_hand_trajectory,
        action_mode=ActionMode.Absolute if config.absolute_action_space else ActionMode.Relative,
        initial_state_source=source,
    )


def init_policy(config: TrainConfig, rng: Optional[np.random.Generator] = None) -> PolicyParams:
    rng = rng or np.random.default_rng(config.seed)
    mode = ActionMode.Absolute if config.absolute_action_space else ActionMode.Relative
    params = PolicyParams.init(rng, obs_dim=OBS_DIM, act_dim=N_ACTUATORS,
                               hidden=config.hidden_size, action_mode=mode,
                               neutral_offsets=neutral_setpoints())
    params.log_std[...] = np.asarray(config.log_std_init, dtype=float)
    return params


# --- generalized advantage estimation --------------------------------------

def gae(rewards: np.ndarray, values: np.ndarray, gamma: float, lam: float,
        terminated: bool = True, bootstrap_value: float = 0.0):
    """Per-episode GAE. Terminal episodes bootstrap 0 beyond the last step;
    truncated episodes bootstrap the critic's value of the next state."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must have equal length")
    T = len(rewards)
    adv = np.zeros(T)
    next_value = 0.0 if terminated else float(bootstrap_value)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
        next_value = values[t]
    return adv, adv + values


# --- rollout collection ------------------------------------------------------

def _snapshot_hidden(h: HiddenState) -> np.ndarray:
    return np.stack(h.actor_h + h.actor_c + h.critic_h + h.critic_c)


def _hidden_from_snapshots(snaps: list[np.ndarray], params: PolicyParams) -> HiddenState:
    stacked = np.stack(snaps, axis=1)  # (8, B, hidden)
    return HiddenState(actor_h=[stacked[0], stacked[1]], actor_c=[stacked[2], stacked[3]],
                       critic_h=[stacked[4], stacked[5]], critic_c=[stacked[6], stacked[7]])


def run_episode(env: SkillEnv, params: PolicyParams, episode_seed, rng_act,
                step_budget: Optional[int] = None, deterministic: bool = False) -> dict:
    """Roll one episode; returns arrays plus hidden snapshots at window
    boundaries and the truncation bootstrap value."""
    obs = env.reset(episode_seed)
    hidden = HiddenState.zeros(params)
    obs_l, act_l, logp_l, val_l, rew_l, snaps = [], [], [], [], [], []
    term_sums: dict = {}
    terminated = False
    reason = None
    fault = False
    bootstrap = 0.0
    t = 0
    while True:
        if t % BPTT_WINDOW == 0:
            snaps.append(_snapshot_hidden(hidden))
        mean, log_std, value, hidden = forward(params, obs, hidden)
        if deterministic:
            action, logp = mean, gaussian_log_prob(mean, mean, log_std)
        else:
            action, logp = sample_action(params, mean, rng_act)
        res = env.step(action)
        if res.fault:
            fault = True
            terminated = False
            reason = res.reason
            break
        obs_l.append(obs)
        act_l.append(action)
        logp_l.append(float(logp))
        val_l.append(float(value))
        rew_l.append(res.reward)
        for name, cost in res.breakdown.terms.items():
            term_sums[name] = term_sums.get(name, 0.0) + cost
        t += 1
        obs = res.obs
        if res.done:
            terminated = res.terminated
            reason = res.reason
            if not terminated:
                _, _, bootstrap, _ = forward(params, obs, hidden)
                bootstrap = float(bootstrap)
            break
        if step_budget is not None and t >= step_budget:
            _, _, bootstrap, _ = forward(params, obs, hidden)
            bootstrap = float(bootstrap)
            break
    outcome = env.episode_outcome(terminated)
    return {
        "obs": np.array(obs_l), "act": np.array(act_l), "logp": np.array(logp_l),
        "value": np.array(val_l), "reward": np.array(rew_l),
        "terminated": terminated, "bootstrap": bootstrap, "snaps": snaps,
        "reason": reason, "fault": fault, "term_sums": term_sums,
        "success": outcome["success"], "error_m": outcome["error_m"],
    }


def _collect_worker(args) -> list[dict]:
    params, config_dict, worker_id, iteration, quota = args
    config = TrainConfig.from_dict(config_dict)
    env = build_env(config)
    episodes = []
    total = 0
    ep = 0
    while total < quota:
        ss = np.random.SeedSequence((config.seed, iteration, worker_id, ep))
        s_env, s_act = ss.spawn(2)
        rng_act = np.random.default_rng(s_act)
        record = run_episode(env, params, s_env, rng_act, step_budget=quota - total)
        if len(record["obs"]):
            episodes.append(record)
            total += len(record["obs"])
        elif record["fault"]:
            episodes.append(record)
        ep += 1
    return episodes


def collect_rollouts(params: PolicyParams, config: TrainConfig, iteration: int = 0,
                     pool=None) -> list[dict]:
    """One iteration's batch of episodes, split across workers. Worker
    streams are seeded from (seed, iteration, worker, episode), so a given
    configuration replays exactly."""
    quota = config.steps_per_iteration
    if config.workers <= 1 or pool is None:
        return _collect_worker((params, config.to_dict(), 0, iteration, quota))
    share = int(np.ceil(quota / config.workers))
    args = [(params, config.to_dict(), w, iteration, share) for w in range(config.workers)]
    results = pool.map(_collect_worker, args)
    return [ep for chunk in results for ep in chunk]


# --- windows and updates -----------------------------------------------------

def episodes_to_windows(episodes: list[dict], config: TrainConfig) -> list[dict]:
    windows = []
    all_adv = []
    for ep in episodes:
        if ep["fault"] or len(ep["obs"]) == 0:
            continue
        adv, ret = gae(ep["reward"], ep["value"], config.gamma, config.gae_lambda,
                       terminated=ep["terminated"], bootstrap_value=ep["bootstrap"])
        ep["adv"] = adv
        ep["ret"] = ret
        all_adv.append(adv)
    if not all_adv:
        return []
    flat = np.concatenate(all_adv)
    mean, std = float(flat.mean()), float(flat.std())
    for ep in episodes:
        if ep["fault"] or len(ep["obs"]) == 0:
            continue
        norm_adv = (ep["adv"] - mean) / (std + 1e-8)
        T = len(ep["obs"])
        for i, start in enumerate(range(0, T, BPTT_WINDOW)):
            stop = min(start + BPTT_WINDOW, T)
            windows.append({
                "obs": ep["obs"][start:stop],
                "act": ep["act"][start:stop],
                "logp": ep["logp"][start:stop],
                "adv": norm_adv[start:stop],
                "ret": ep["ret"][start:stop],
                "h0": ep["snaps"][i],
            })
    return windows


def _stack_minibatch(windows: list[dict], params: PolicyParams):
    B = len(windows)
    T = max(len(w["obs"]) for w in windows)
    obs = np.zeros((T, B, windows[0]["obs"].shape[-1]))
    act = np.zeros((T, B, windows[0]["act"].shape[-1]))
    logp = np.zeros((T, B))
    adv = np.zeros((T, B))
    ret = np.zeros((T, B))
    mask = np.zeros((T, B))
    for b, w in enumerate(windows):
        L = len(w["obs"])
        obs[:L, b] = w["obs"]
        act[:L, b] = w["act"]
        logp[:L, b] = w["logp"]
        adv[:L, b] = w["adv"]
        ret[:L, b] = w["ret"]
        mask[:L, b] = 1.0
    h0 = _hidden_from_snapshots([w["h0"] for w in windows], params)
    return obs, act, logp, adv, ret, mask, h0


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


class Optimizer:
    """Adam (default) or plain SGD over the flat gradient dict. Every update
    norm is additionally capped at learning_rate * grad_clip_norm, which
    makes the documented parameter-norm growth bound hold for both modes."""

    def __init__(self, kind: str, lr: float, grad_clip_norm: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.kind = kind
        self.lr = lr
        self.max_step_norm = lr * grad_clip_norm
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params: PolicyParams, grads: dict) -> None:
        self.t += 1
        updates = {}
        if self.kind == "sgd":
            for name, g in grads.items():
                updates[name] = self.lr * g
        else:
            for name, g in grads.items():
                if name not in self.m:
                    self.m[name] = np.zeros_like(g)
                    self.v[name] = np.zeros_like(g)
                self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
                self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
                mh = self.m[name] / (1 - self.beta1 ** self.t)
                vh = self.v[name] / (1 - self.beta2 ** self.t)
                updates[name] = self.lr * mh / (np.sqrt(vh) + self.eps)
        norm = float(np.sqrt(sum(float(np.sum(u * u)) for u in updates.values())))
        if self.kind == "sgd" and norm > self.max_step_norm and norm > 0:
            scale = self.max_step_norm / norm
            for u in updates.values():
                u *= scale
        for name, u in updates.items():
            params.get_array(name)[...] -= u


def ppo_update(params: PolicyParams, windows: list[dict], config: TrainConfig,
               optimizer: Optional[Optimizer] = None,
               rng: Optional[np.random.Generator] = None) -> tuple[PolicyParams, dict]:
    """Clipped-surrogate update over minibatches of BPTT windows. Returns
    (new params, stats); aborts (returning the old params) if any loss
    turns non-finite."""
    if not windows:
        return params, {"aborted": True, "reason": "empty batch"}
    rng = rng or np.random.default_rng(0)
    optimizer = optimizer or Optimizer(config.optimizer, config.learning_rate,
                                       config.grad_clip_norm)
    new_params = params.copy()
    eps = config.clip_epsilon
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "kl": 0.0, "clip_fraction": 0.0,
             "grad_norm": 0.0, "updates": 0}
    for _ in range(config.epochs_per_iteration):
        order = rng.permutation(len(windows))
        for lo in range(0, len(order), config.minibatch_windows):
            batch = [windows[i] for i in order[lo:lo + config.minibatch_windows]]
            obs, act, logp_old, adv, ret, mask, h0 = _stack_minibatch(batch, new_params)
            means, values, caches, _ = forward_window(new_params, obs, h0)
            log_std = new_params.clamped_log_std()
            logp = gaussian_log_prob(act, means, log_std)
            n = float(mask.sum())
            ratio = np.exp(np.clip(logp - logp_old, -30.0, 30.0))
            surr1 = ratio * adv
            surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
            policy_loss = -float(np.sum(np.minimum(surr1, surr2) * mask) / n)
            verr = values - ret
            value_loss = 0.5 * float(np.sum(verr ** 2 * mask) / n)
            if not np.isfinite(policy_loss) or not np.isfinite(value_loss):
                return params, {"aborted": True, "reason": "non-finite loss", **stats}

            unclipped = (surr1 <= surr2).astype(float)
            dlogp = -(adv * ratio * unclipped) * mask / n
            sigma2 = np.exp(2.0 * log_std)
            d_mean = dlogp[..., None] * (act - means) / sigma2
            z2 = ((act - means) ** 2) / sigma2
            d_log_std = dlogp[..., None] * (z2 - 1.0)
            if config.entropy_coef:
                d_log_std -= config.entropy_coef * mask[..., None] / n
            d_value = config.value_coef * verr * mask / n
            grads = backward(new_params, obs, h0, d_mean, d_value,
                             d_log_std=d_log_std, caches=caches)
            gnorm = clip_grad_norm(grads, config.grad_clip_norm)
            optimizer.step(new_params, grads)

            with np.errstate(invalid="ignore"):
                kl = float(np.sum((logp_old - logp) * mask) / n)
            stats["policy_loss"] += policy_loss
            stats["value_loss"] += value_loss
            stats["kl"] += kl
            stats["clip_fraction"] += float(np.sum((np.abs(ratio - 1.0) > eps) * mask) / n)
            stats["grad_norm"] += gnorm
            stats["updates"] += 1
    for k in ("policy_loss", "value_loss", "kl", "clip_fraction", "grad_norm"):
        if stats["updates"]:
            stats[k] /= stats["updates"]
    stats["aborted"] = False
    return new_params, stats


# --- training loop -----------------------------------------------------------

def train(config: TrainConfig, resume: bool = False,
          progress_callback: Optional[Callable] = None) -> dict:
    """Full training loop: collect, estimate advantages, update, log, and
    checkpoint. Emits per-iteration CSV and a run-metadata file; resumable
    from the last checkpoint."""
    os.makedirs(config.out_dir, exist_ok=True)
    meta_path = os.path.join(config.out_dir, "run_metadata.json")
    csv_path = os.path.join(config.out_dir, "reward_curve.csv")
    progress_path = os.path.join(config.out_dir, "progress.json")

    start_iter = 0
    env_steps = 0
    params = init_policy(config)
    optimizer = Optimizer(config.optimizer, config.learning_rate, config.grad_clip_norm)
    if resume and os.path.exists(progress_path):
        with open(progress_path) as fh:
            prog = json.load(fh)
        start_iter = prog["iteration"] + 1
        env_steps = prog["env_steps"]
        params = load_checkpoint(os.path.join(config.out_dir, prog["checkpoint"]))

    from . import __version__
    with open(meta_path, "w") as fh:
        json.dump({"config": config.to_dict(), "obs_dim": OBS_DIM,
                   "act_dim": N_ACTUATORS, "resumed_at": start_iter,
                   "boxloco_version": __version__}, fh, indent=2)

    term_names: list[str] = []
    if start_iter == 0 and os.path.exists(csv_path):
        os.remove(csv_path)

    pool = None
    if config.workers > 1:
        # warm the jit cache before forking so children inherit compiled code
        warm_env = build_env(config)
        warm_env.reset(0)
        warm_env.step(np.zeros(N_ACTUATORS))
        pool = get_context("fork").Pool(config.workers)

    rng_update = np.random.default_rng(np.random.SeedSequence((config.seed, 0xA11CE)))
    summary = {"stopped_early": False, "iterations_run": 0, "env_steps": env_steps}
    try:
        for iteration in range(start_iter, config.iterations):
            episodes = collect_rollouts(params, config, iteration, pool)
            n_steps = sum(len(ep["obs"]) for ep in episodes)
            env_steps += n_steps
            windows = episodes_to_windows(episodes, config)
            params, stats = ppo_update(params, windows, config, optimizer, rng_update)

            done_eps = [ep for ep in episodes if not ep["fault"]]
            successes = [ep["success"] for ep in done_eps]
            mean_reward = float(np.mean([ep["reward"].sum() for ep in done_eps])) if done_eps else 0.0
            mean_len = float(np.mean([len(ep["obs"]) for ep in done_eps])) if done_eps else 0.0
            success_rate = float(np.mean(successes)) if successes else 0.0
            faults = sum(1 for ep in episodes if ep["fault"])

            term_totals: dict = {}
            for ep in done_eps:
                for name, s in ep["term_sums"].items():
                    term_totals[name] = term_totals.get(name, 0.0) + s
            if not term_names:
                term_names = sorted(term_totals)
                with open(csv_path, "a") as fh:
                    cols = ["iteration", "env_steps", "episodes", "mean_episode_reward",
                            "mean_episode_length", "success_rate", "fault_episodes",
                            "policy_loss", "value_loss", "kl", "clip_fraction"]
                    cols += [f"r_{n}" for n in term_names]
                    fh.write(",".join(cols) + "\n")
            row = [iteration, env_steps, len(done_eps), mean_reward, mean_len,
                   success_rate, faults, stats.get("policy_loss", 0.0),
                   stats.get("value_loss", 0.0), stats.get("kl", 0.0),
                   stats.get("clip_fraction", 0.0)]
            row += [term_totals.get(n, 0.0) / max(n_steps, 1) for n in term_names]
            with open(csv_path, "a") as fh:
                fh.write(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row) + "\n")

            ck_name = None
            if (iteration + 1) % config.checkpoint_every == 0 or iteration == config.iterations - 1:
                ck_name = f"checkpoint_{iteration:06d}.bin"
            stopping = env_steps >= config.max_env_steps
            target_reached = False
            if (config.stop_success_rate is not None
                    and success_rate >= config.stop_check_trigger):
                report = evaluate(params, config.skill, config.stop_eval_episodes,
                                  seed=config.seed + 7777, config=config)
                if report.success_rate >= config.stop_success_rate:
                    target_reached = True
                    summary["final_eval"] = report.to_dict()
            if stopping or target_reached:
                ck_name = f"checkpoint_{iteration:06d}.bin"
            if ck_name:
                save_checkpoint(params, os.path.join(config.out_dir, ck_name))
                with open(progress_path, "w") as fh:
                    json.dump({"iteration": iteration, "env_steps": env_steps,
                               "checkpoint": ck_name}, fh)
            if progress_callback:
                progress_callback(iteration, env_steps, success_rate, mean_reward)
            summary["iterations_run"] = iteration - start_iter + 1
            summary["env_steps"] = env_steps
            summary["success_rate"] = success_rate
            summary["mean_reward"] = mean_reward
            if target_reached:
                summary["stopped_early"] = True
                break
            if stopping:
                break
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    final_ck = os.path.join(config.out_dir, "checkpoint_final.bin")
    save_checkpoint(params, final_ck)
    summary["checkpoint"] = final_ck
    summary["csv"] = csv_path
    return summary


# --- evaluation ----------------------------------------------------------------

def evaluate(params: PolicyParams, skill: SkillId, n_episodes: int, seed: int = 0,
             config: Optional[TrainConfig] = None,
             env: Optional[SkillEnv] = None) -> EvalReport:
    """Deterministic (mean-action) evaluation. An episode succeeds when no
    termination fired and, for box skills, the box ends held in both hands;
    the error is the final box-to-target distance over successes."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if env is None:
        config = config or TrainConfig(skill=skill, workers=1)
        config = dataclasses.replace(config, skill=skill)
        env = build_env(config)
    reasons: dict = {}
    successes = 0
    errors = []
    rng_act = np.random.default_rng(seed)
    for ep in range(n_episodes):
        ss = np.random.SeedSequence((seed, 0xE7A1, ep))
        record = run_episode(env, params, ss, rng_act, deterministic=True)
        reason = record["reason"] or ("horizon" if not record["fault"] else "fault")
        reasons[reason] = reasons.get(reason, 0) + 1
        if record["success"]:
            successes += 1
            if record["error_m"] is not None:
                errors.append(record["error_m"])
    involves_box = skill in (SkillId.PickUp, SkillId.WalkWithBox, SkillId.StandWithBox)
    mean_error_cm = float(np.mean(errors) * 100.0) if (involves_box and errors) else (
        None if not involves_box else float("nan"))
    return EvalReport(episodes=n_episodes, success_rate=successes / n_episodes,
                      mean_error_cm=mean_error_cm, termination_reasons=reasons)


# --- out-of-distribution limit search ------------------------------------------

LIMIT_PARAMS = ("mass", "size", "dx", "dy", "dz", "rotation")


def _mean_pickup_scenario_source(parameter: str, value: float):
    """Fixed pickup scenario with every box parameter at the training mean
    except the one under test."""
    means = {
        "mass": 0.5 * (scn.BOX_MASS_RANGE[0] + scn.BOX_MASS_RANGE[1]),
        "size": 0.5 * (scn.BOX_DIM_RANGE[0] + scn.BOX_DIM_RANGE[1]),
        "dx": 0.5 * (scn.PICKUP_X_RANGE[0] + scn.PICKUP_X_RANGE[1]),
        "dy": 0.0,
        "dz": 0.5 * (scn.PICKUP_Z_RANGE[0] + scn.PICKUP_Z_RANGE[1]),
        "rotation": 0.0,
    }
    v = dict(means)
    v[parameter] = value

    def source(rng: np.random.Generator) -> scn.ScenarioSpec:
        box_pos = np.array([v["dx"], v["dy"], v["dz"]])
        target = np.array([v["dx"], v["dy"], min(v["dz"] + 0.2, 1.3)])
        return scn.ScenarioSpec(
            skill=SkillId.PickUp, seed=int(rng.integers(0, 2 ** 62)),
            box_pos=box_pos, box_yaw=np.deg2rad(v["rotation"]),
            box_dims=np.full(3, v["size"]), box_mass=v["mass"],
            target_pos=target, commands={}, dynamics_scales={})
    return source


def find_limits(params: PolicyParams, parameter: str, step_size: float,
                trials: int = 5, seed: int = 0, max_steps: int = 200,
                config: Optional[TrainConfig] = None,
                success_fn: Optional[Callable] = None) -> dict:
    """Increment `parameter` from its training-range mean until the policy
    first fails a 5-trial majority; returns the last passing value.

    `success_fn(value, seed) -> bool` replaces the simulation rollout when
    provided (fixture-policy tests use an analytic threshold).
    """
    if parameter not in LIMIT_PARAMS:
        raise ValueError(f"parameter must be one of {LIMIT_PARAMS}")
    means = {"mass": 5.5, "size": 0.325, "dx": 0.425, "dy": 0.0, "dz": 0.65,
             "rotation": 0.0}
    base = means[parameter]
    config = config or TrainConfig(skill=SkillId.PickUp, workers=1)

    def trial_success(value: float, trial_seed: int) -> bool:
        if success_fn is not None:
            return bool(success_fn(value, trial_seed))
        c = dataclasses.replace(config, skill=SkillId.PickUp,
                                randomize_dynamics=False, randomize_box_obs=False)
        env = build_env(c)
        env.scenario_source = _mean_pickup_scenario_source(parameter, value)
        record = run_episode(env, params, np.random.SeedSequence((seed, trial_seed)),
                             np.random.default_rng(trial_seed), deterministic=True)
        return bool(record["success"])

    frontier = []
    last_passing = None
    value = base
    for level in range(max_steps):
        wins = sum(trial_success(value, 1000 * level + k) for k in range(trials))
        passed = wins > trials // 2
        frontier.append({"value": float(value), "wins": int(wins), "passed": passed})
        if not passed:
            break
        last_passing = value
        value = value + step_size
    failed_at_mean = last_passing is None
    return {
        "parameter": parameter,
        "max_passing_value": float(base if failed_at_mean else last_passing),
        "failed_at_mean": failed_at_mean,
        "frontier": frontier,
    }
