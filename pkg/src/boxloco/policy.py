"""Recurrent actor-critic with hand-derived gradients.

Actor and critic are separate two-layer LSTM trunks with linear heads; the
actor adds a state-independent learnable log-std (clamped to [-3, 0.5]).
Gradients come from manual backpropagation through time over truncated
windows; no autodiff framework is involved. All math is float64; the
checkpoint interchange format quantizes to little-endian float32.
"""
from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .world import ActionMode, N_ACTUATORS

LOG_STD_MIN = -3.0
LOG_STD_MAX = 0.5
DEFAULT_HIDDEN = 64
BPTT_WINDOW = 32

CHECKPOINT_MAGIC = b"BXLC"
CHECKPOINT_VERSION = 1


class GradientFault(RuntimeError):
    """Non-finite gradient during backpropagation."""


def _init_lstm(rng: np.random.Generator, in_dim: int, hidden: int) -> dict:
    k = 1.0 / np.sqrt(hidden)
    layer = {
        "W": rng.uniform(-k, k, size=(4 * hidden, in_dim)),
        "U": rng.uniform(-k, k, size=(4 * hidden, hidden)),
        "b": np.zeros(4 * hidden),
    }
    layer["b"][hidden:2 * hidden] = 1.0  # forget-gate bias
    return layer


def _init_linear(rng: np.random.Generator, in_dim: int, out_dim: int, scale: float = 1.0) -> dict:
    k = scale / np.sqrt(in_dim)
    return {"W": rng.uniform(-k, k, size=(out_dim, in_dim)), "b": np.zeros(out_dim)}


@dataclass
class PolicyParams:
    obs_dim: int
    act_dim: int
    hidden: int
    action_mode: ActionMode
    neutral_offsets: np.ndarray
    actor: list          # [lstm1, lstm2] dicts
    actor_head: dict
    log_std: np.ndarray  # (act_dim,)
    critic: list
    critic_head: dict

    @staticmethod
    def init(rng: np.random.Generator, obs_dim: int, act_dim: int = N_ACTUATORS,
             hidden: int = DEFAULT_HIDDEN, action_mode: ActionMode = ActionMode.Relative,
             neutral_offsets: Optional[np.ndarray] = None) -> "PolicyParams":
        neutral = np.zeros(act_dim) if neutral_offsets is None else np.asarray(neutral_offsets, float)
        return PolicyParams(
            obs_dim=obs_dim, act_dim=act_dim, hidden=hidden, action_mode=action_mode,
            neutral_offsets=neutral,
            actor=[_init_lstm(rng, obs_dim, hidden), _init_lstm(rng, hidden, hidden)],
            actor_head=_init_linear(rng, hidden, act_dim, scale=0.1),
            log_std=np.full(act_dim, -1.0),
            critic=[_init_lstm(rng, obs_dim, hidden), _init_lstm(rng, hidden, hidden)],
            critic_head=_init_linear(rng, hidden, 1),
        )

    def clamped_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    # --- flat parameter views (optimizers, checkpoints, fd tests) ---------
    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for trunk, name in ((self.actor, "actor"), (self.critic, "critic")):
            for i, layer in enumerate(trunk):
                for key in ("W", "U", "b"):
                    out.append((f"{name}.{i}.{key}", layer[key]))
        for head, name in ((self.actor_head, "actor_head"), (self.critic_head, "critic_head")):
            for key in ("W", "b"):
                out.append((f"{name}.{key}", head[key]))
        out.append(("log_std", self.log_std))
        out.append(("neutral_offsets", self.neutral_offsets))
        return out

    def get_array(self, name: str) -> np.ndarray:
        parts = name.split(".")
        if parts[0] in ("actor", "critic"):
            trunk = self.actor if parts[0] == "actor" else self.critic
            return trunk[int(parts[1])][parts[2]]
        if parts[0] in ("actor_head", "critic_head"):
            return (self.actor_head if parts[0] == "actor_head" else self.critic_head)[parts[1]]
        return getattr(self, parts[0])

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            obs_dim=self.obs_dim, act_dim=self.act_dim, hidden=self.hidden,
            action_mode=self.action_mode, neutral_offsets=self.neutral_offsets.copy(),
            actor=[{k: v.copy() for k, v in l.items()} for l in self.actor],
            actor_head={k: v.copy() for k, v in self.actor_head.items()},
            log_std=self.log_std.copy(),
            critic=[{k: v.copy() for k, v in l.items()} for l in self.critic],
            critic_head={k: v.copy() for k, v in self.critic_head.items()},
        )


def zero_grads(params: PolicyParams) -> dict:
    return {name: np.zeros_like(arr) for name, arr in params.named_arrays()
            if name != "neutral_offsets"}


@dataclass
class HiddenState:
    """Per-layer (h, c) for both trunks; zeroed at episode starts and at
    policy-transition boundaries."""
    actor_h: list
    actor_c: list
    critic_h: list
    critic_c: list

    @staticmethod
    def zeros(params: PolicyParams, batch: Optional[int] = None) -> "HiddenState":
        shape = (params.hidden,) if batch is None else (batch, params.hidden)
        mk = lambda: [np.zeros(shape), np.zeros(shape)]
        return HiddenState(mk(), mk(), mk(), mk())

    def copy(self) -> "HiddenState":
        return HiddenState([h.copy() for h in self.actor_h], [c.copy() for c in self.actor_c],
                           [h.copy() for h in self.critic_h], [c.copy() for c in self.critic_c])


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _lstm_step(layer: dict, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """One LSTM step; returns (h', c', cache-for-backward)."""
    n = h.shape[-1]
    z = x @ layer["W"].T + h @ layer["U"].T + layer["b"]
    i = _sigmoid(z[..., 0:n])
    f = _sigmoid(z[..., n:2 * n])
    g = np.tanh(z[..., 2 * n:3 * n])
    o = _sigmoid(z[..., 3 * n:4 * n])
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    cache = (x, h, c, i, f, g, o, tanh_c)
    return h_new, c_new, cache


def _lstm_back(layer: dict, cache, dh: np.ndarray, dc: np.ndarray, grads: dict, prefix: str):
    """Backward one step; returns (dx, dh_prev, dc_prev)."""
    x, h_prev, c_prev, i, f, g, o, tanh_c = cache
    do = dh * tanh_c
    dct = dc + dh * o * (1.0 - tanh_c ** 2)
    di = dct * g
    df = dct * c_prev
    dg = dct * i
    dc_prev = dct * f
    dzi = di * i * (1.0 - i)
    dzf = df * f * (1.0 - f)
    dzg = dg * (1.0 - g ** 2)
    dzo = do * o * (1.0 - o)
    dz = np.concatenate([dzi, dzf, dzg, dzo], axis=-1)
    if dz.ndim == 1:
        grads[prefix + ".W"] += np.outer(dz, x)
        grads[prefix + ".U"] += np.outer(dz, h_prev)
        grads[prefix + ".b"] += dz
    else:
        grads[prefix + ".W"] += dz.T @ x
        grads[prefix + ".U"] += dz.T @ h_prev
        grads[prefix + ".b"] += dz.sum(axis=0)
    dx = dz @ layer["W"]
    dh_prev = dz @ layer["U"]
    return dx, dh_prev, dc_prev


def _trunk_step(trunk: list, x, hs, cs):
    caches = []
    out = x
    new_h, new_c = [], []
    for layer, h, c in zip(trunk, hs, cs):
        out, c_new, cache = _lstm_step(layer, out, h, c)
        caches.append(cache)
        new_h.append(out)
        new_c.append(c_new)
    return out, new_h, new_c, caches


def forward(params: PolicyParams, observation: np.ndarray, hidden: HiddenState):
    """One policy step: (action mean, log std, value, next hidden).

    Accepts a single observation (obs_dim,) or a batch (B, obs_dim).
    """
    obs = np.asarray(observation, dtype=float)
    if obs.shape[-1] != params.obs_dim:
        raise ValueError(f"observation dim {obs.shape[-1]} != {params.obs_dim}")
    a_out, a_h, a_c, _ = _trunk_step(params.actor, obs, hidden.actor_h, hidden.actor_c)
    mean = a_out @ params.actor_head["W"].T + params.actor_head["b"]
    c_out, c_h, c_c, _ = _trunk_step(params.critic, obs, hidden.critic_h, hidden.critic_c)
    value = (c_out @ params.critic_head["W"].T + params.critic_head["b"])[..., 0]
    new_hidden = HiddenState(a_h, a_c, c_h, c_c)
    return mean, params.clamped_log_std(), value, new_hidden


def forward_window(params: PolicyParams, obs_window: np.ndarray, hidden: HiddenState):
    """Unrolled forward over a (T, ..., obs_dim) window, keeping caches."""
    T = obs_window.shape[0]
    means = []
    values = []
    caches = []
    h = hidden.copy()
    for t in range(T):
        a_out, a_h, a_c, a_cache = _trunk_step(params.actor, obs_window[t], h.actor_h, h.actor_c)
        c_out, c_h, c_c, c_cache = _trunk_step(params.critic, obs_window[t], h.critic_h, h.critic_c)
        means.append(a_out @ params.actor_head["W"].T + params.actor_head["b"])
        values.append((c_out @ params.critic_head["W"].T + params.critic_head["b"])[..., 0])
        caches.append((a_cache, c_cache, a_out, c_out))
        h = HiddenState(a_h, a_c, c_h, c_c)
    return np.stack(means), np.stack(values), caches, h


def backward(params: PolicyParams, obs_window: np.ndarray, hidden: HiddenState,
             d_mean: np.ndarray, d_value: np.ndarray,
             d_log_std: Optional[np.ndarray] = None,
             caches: Optional[list] = None) -> dict:
    """BPTT over a truncated window.

    obs_window: (T, ..., obs_dim); d_mean: (T, ..., act_dim); d_value:
    (T, ...); d_log_std: per-step (T, ..., act_dim) or already-summed
    (act_dim,). The initial hidden state is treated as a constant.
    """
    T = obs_window.shape[0]
    if T > BPTT_WINDOW:
        raise ValueError(f"window length {T} exceeds truncation limit {BPTT_WINDOW}")
    if caches is None:
        _, _, caches, _ = forward_window(params, obs_window, hidden)
    grads = zero_grads(params)

    batched = obs_window.ndim == 3
    zeros = lambda: (np.zeros_like(caches[0][0][0][1]))  # matches h shape
    a_dh = [zeros(), zeros()]
    a_dc = [zeros(), zeros()]
    c_dh = [zeros(), zeros()]
    c_dc = [zeros(), zeros()]
    for t in range(T - 1, -1, -1):
        a_cache, c_cache, a_out, c_out = caches[t]
        dm = d_mean[t]
        dv = d_value[t]
        if batched:
            grads["actor_head.W"] += dm.T @ a_out
            grads["actor_head.b"] += dm.sum(axis=0)
            grads["critic_head.W"] += dv[:, None].T @ c_out
            grads["critic_head.b"] += dv.sum(axis=0, keepdims=True)[:1]
        else:
            grads["actor_head.W"] += np.outer(dm, a_out)
            grads["actor_head.b"] += dm
            grads["critic_head.W"] += dv * c_out[None, :]
            grads["critic_head.b"] += np.atleast_1d(dv)
        da_top = dm @ params.actor_head["W"] + a_dh[1]
        dc_top = dv[..., None] * params.critic_head["W"][0] + c_dh[1]
        dx2, a_dh[1], a_dc[1] = _lstm_back(params.actor[1], a_cache[1], da_top, a_dc[1], grads, "actor.1")
        dh1 = dx2 + a_dh[0]
        _, a_dh[0], a_dc[0] = _lstm_back(params.actor[0], a_cache[0], dh1, a_dc[0], grads, "actor.0")
        dx2c, c_dh[1], c_dc[1] = _lstm_back(params.critic[1], c_cache[1], dc_top, c_dc[1], grads, "critic.1")
        dh1c = dx2c + c_dh[0]
        _, c_dh[0], c_dc[0] = _lstm_back(params.critic[0], c_cache[0], dh1c, c_dc[0], grads, "critic.0")

    if d_log_std is not None:
        d_ls = np.asarray(d_log_std, dtype=float)
        if d_ls.shape == (params.act_dim,):
            total = d_ls
        else:
            total = d_ls.reshape(-1, params.act_dim).sum(axis=0)
        # clamp gradient: zero where the clamp is active
        active = (params.log_std > LOG_STD_MIN) & (params.log_std < LOG_STD_MAX)
        grads["log_std"] += np.where(active, total, 0.0)

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise GradientFault(f"non-finite gradient in {name}")
    return grads


def apply_action(mode: ActionMode, action: np.ndarray, current_actuator_pos: np.ndarray,
                 neutral_offsets: np.ndarray) -> np.ndarray:
    """PD setpoints from a (clamped) action: relative adds to the current
    motor positions, absolute adds to the static neutral offsets."""
    a = np.asarray(action, dtype=float)
    if mode == ActionMode.Relative:
        return np.asarray(current_actuator_pos, dtype=float) + a
    return np.asarray(neutral_offsets, dtype=float) + a


def sample_action(params: PolicyParams, mean: np.ndarray, rng: np.random.Generator):
    """Diagonal Gaussian draw; returns (action, log_prob)."""
    log_std = params.clamped_log_std()
    std = np.exp(log_std)
    noise = rng.standard_normal(mean.shape)
    action = mean + std * noise
    log_prob = gaussian_log_prob(action, mean, log_std)
    return action, log_prob


def gaussian_log_prob(action: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (action - mean) / np.exp(log_std)
    return (-0.5 * z ** 2 - log_std - 0.5 * np.log(2.0 * np.pi)).sum(axis=-1)


# --- checkpoint format -----------------------------------------------------
# magic | u32 version | u32 header length | header json (utf-8) | f32 LE blob
# The header lists array names/shapes in blob order plus scalar metadata.

def save_checkpoint(params: PolicyParams, path: str) -> None:
    arrays = params.named_arrays()
    header = {
        "obs_dim": params.obs_dim,
        "act_dim": params.act_dim,
        "hidden": params.hidden,
        "action_mode": params.action_mode.value,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(hjson)))
        fh.write(hjson)
        for _, a in arrays:
            fh.write(a.astype("<f4").tobytes())


def load_checkpoint(path: str) -> PolicyParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a policy checkpoint")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        blob = fh.read()
    arrays = {}
    off = 0
    for spec in header["arrays"]:
        n = int(np.prod(spec["shape"])) if spec["shape"] else 1
        data = np.frombuffer(blob, dtype="<f4", count=n, offset=off).astype(float)
        arrays[spec["name"]] = data.reshape(spec["shape"])
        off += 4 * n
    hidden = header["hidden"]
    def lstm(prefix):
        return {k: arrays[f"{prefix}.{k}"] for k in ("W", "U", "b")}
    def head(prefix):
        return {k: arrays[f"{prefix}.{k}"] for k in ("W", "b")}
    return PolicyParams(
        obs_dim=header["obs_dim"], act_dim=header["act_dim"], hidden=hidden,
        action_mode=ActionMode(header["action_mode"]),
        neutral_offsets=arrays["neutral_offsets"],
        actor=[lstm("actor.0"), lstm("actor.1")],
        actor_head=head("actor_head"),
        log_std=arrays["log_std"],
        critic=[lstm("critic.0"), lstm("critic.1")],
        critic_head=head("critic_head"),
    )
