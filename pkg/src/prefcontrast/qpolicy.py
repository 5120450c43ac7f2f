"""Q-function policies and a small DQN trainer."""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import mlp
from .sim_env import N_ACTIONS, OBS_DIM, EnvParams, MergeEnv, Reason, RewardWeights

log = logging.getLogger(__name__)

FORMAT_VERSION = 3
_MAGIC = b"PQFN"

# Network input: the observation with the other car's y replaced by the gap
# other.y - agent.y, then standardised as (z - shift) / scale.
OBS_SHIFT = np.array([15.0, 0.0, 0.0, 15.0, 0.0, 25.0, 0.0, 0.0, 15.0, 0.0])
OBS_SCALE = np.array([10.0, 100.0, 0.5, 5.0, 30.0, 10.0, 10.0, 0.5, 5.0, 30.0])
_GAP = 6
OBS_CLIP = 5.0  # normalized inputs are clipped so far off-road states stay in the trained range


class PolicyFormatError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


class QFunction:
    """Greedy policy defined by an action-value network.

    Parameters are copied on construction and never mutated afterwards, so one
    instance can be shared between threads for read-only evaluation.
    """

    def __init__(self, params: mlp.MlpParams, metadata: dict | None = None,
                 obs_shift=OBS_SHIFT, obs_scale=OBS_SCALE, value_scale: float = 1.0):
        self.params = params.copy()
        for a in self.params.arrays():
            a.setflags(write=False)
        self.metadata = dict(metadata or {})
        self.obs_shift = np.array(obs_shift, dtype=np.float64)
        self.obs_scale = np.array(obs_scale, dtype=np.float64)
        # network outputs are in training units; this maps them back to reward units
        self.value_scale = float(value_scale)

    def _prep(self, obs) -> np.ndarray:
        x = np.asarray(obs, dtype=np.float64)
        if x.shape[-1] != OBS_DIM:
            raise ValueError(f"expected observation of length {OBS_DIM}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("observation contains non-finite values")
        z = x.copy()
        z[..., _GAP] = x[..., _GAP] - x[..., 1]
        return np.clip((z - self.obs_shift) / self.obs_scale, -OBS_CLIP, OBS_CLIP)

    def q_values(self, obs) -> np.ndarray:
        return mlp.forward(self.params, self._prep(obs)) * self.value_scale

    __call__ = q_values

    @property
    def name(self) -> str:
        return str(self.metadata.get("name", "policy"))

    def same_parameters(self, other: "QFunction") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.params.arrays(), other.params.arrays()))


def greedy_action(values) -> int:
    """Index of the largest action value; ties go to the lowest index."""
    return int(np.argmax(values))


def act_greedy(q: QFunction, obs) -> int:
    return greedy_action(q.q_values(obs))


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int = OBS_DIM):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity)
        self.pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self.pos
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(self.size, size=min(batch_size, self.size), replace=False)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx]


@dataclass
class TrainConfig:
    total_steps: int = 100_000
    learning_rate: float = 6.3e-4
    batch_size: int = 128
    buffer_size: int = 50_000
    exploration_fraction: float = 0.1
    initial_epsilon: float = 1.0
    final_epsilon: float = 0.01
    gamma: float = 0.99
    target_update_interval: int = 250
    learning_starts: int = 1000
    train_freq: int = 1
    loss: str = "huber"
    max_grad_norm: float = 10.0
    reward_scale: float = 0.01
    hidden: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if not 0.0 <= self.final_epsilon <= self.initial_epsilon <= 1.0:
            raise ValueError("need 0 <= final_epsilon <= initial_epsilon <= 1")
        if self.batch_size < 1 or self.buffer_size < 1 or self.train_freq < 1:
            raise ValueError("batch_size, buffer_size and train_freq must be positive")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")
        if not 0.0 <= self.exploration_fraction <= 1.0:
            raise ValueError("exploration_fraction must lie in [0, 1]")

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Linear decay over the first ``exploration_fraction`` of training."""
    horizon = cfg.exploration_fraction * cfg.total_steps
    if horizon <= 0:
        return cfg.final_epsilon
    frac = step / horizon
    return max(cfg.final_epsilon, cfg.initial_epsilon - frac * (cfg.initial_epsilon - cfg.final_epsilon))


@dataclass
class TrainResult:
    policy: QFunction
    trace: list = field(default_factory=list)  # (episode, steps, return, epsilon)

    def write_trace(self, path: str | Path) -> None:
        write_trace(self.trace, path)


def write_trace(trace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "steps", "return", "epsilon"])
        for ep, steps, ret, eps in trace:
            w.writerow([ep, steps, repr(float(ret)), repr(float(eps))])


def train_dqn(env_factory: Callable[[RewardWeights], MergeEnv], weights: RewardWeights,
              cfg: TrainConfig, name: str = "policy") -> TrainResult:
    """Train a DQN agent on the reward defined by ``weights``.

    Episodes that hit the step cap are bootstrapped (time-limit truncation);
    only merges and crashes are treated as true terminals.
    """
    seq = np.random.SeedSequence(cfg.seed)
    init_ss, explore_ss, sample_ss, env_ss = seq.spawn(4)
    init_rng = np.random.default_rng(init_ss)
    explore_rng = np.random.default_rng(explore_ss)
    sample_rng = np.random.default_rng(sample_ss)
    env_rng = np.random.default_rng(env_ss)

    params = mlp.MlpParams.init(init_rng, OBS_DIM, cfg.hidden, N_ACTIONS)
    target = params.copy()
    opt = mlp.Adam(params, lr=cfg.learning_rate)
    buf = ReplayBuffer(cfg.buffer_size)
    scaler = QFunction(params)  # only used for its observation transform

    env = env_factory(weights)
    obs = scaler._prep(env.reset(env_rng))
    trace = []
    ep_return, ep_steps, episode = 0.0, 0, 0
    for t in range(cfg.total_steps):
        eps = epsilon_at(t, cfg)
        if explore_rng.random() < eps:
            action = int(explore_rng.integers(N_ACTIONS))
        else:
            action = int(np.argmax(mlp.forward(params, obs)))
        res = env.step(action)
        next_obs = scaler._prep(env.observe())
        done = res.reason in (Reason.MERGED, Reason.CRASHED)
        buf.add(obs, action, res.reward * cfg.reward_scale, next_obs, done)
        ep_return += res.reward
        ep_steps += 1
        obs = next_obs
        if res.terminal:
            trace.append((episode, ep_steps, ep_return, eps))
            episode += 1
            ep_return, ep_steps = 0.0, 0
            obs = scaler._prep(env.reset(env_rng))

        if t >= cfg.learning_starts and t % cfg.train_freq == 0 and len(buf) >= cfg.batch_size:
            s, a, r, s2, d = buf.sample(cfg.batch_size, sample_rng)
            q_next = mlp.forward(target, s2).max(axis=1)
            y = r + cfg.gamma * (1.0 - d) * q_next
            loss, grads = mlp.td_loss_and_grad(params, s, a, y, cfg.loss)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"{name}: non-finite TD loss at step {t}")
            mlp.clip_grad_norm(grads, cfg.max_grad_norm)
            opt.update(params, grads)
            if not params.all_finite():
                raise TrainingDivergedError(f"{name}: non-finite parameters at step {t}")
        if (t + 1) % cfg.target_update_interval == 0:
            target = params.copy()

    meta = {
        "name": name,
        "theta": list(weights.theta),
        "seed": cfg.seed,
        "train_steps": cfg.total_steps,
        "episodes": episode,
    }
    log.info("trained %s: %d steps, %d episodes", name, cfg.total_steps, episode)
    return TrainResult(QFunction(params, meta, value_scale=1.0 / cfg.reward_scale), trace)


def save_policy(q: QFunction, path: str | Path) -> None:
    header = {
        "version": FORMAT_VERSION,
        "shapes": q.params.shapes,
        "metadata": q.metadata,
        "obs_shift": q.obs_shift.tolist(),
        "obs_scale": q.obs_scale.tolist(),
        "value_scale": q.value_scale,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    flat = q.params.flat().astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(flat.tobytes())


def load_policy(path: str | Path) -> QFunction:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != _MAGIC:
        raise PolicyFormatError(f"{path}: not a policy file")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise PolicyFormatError(f"{path}: unsupported format version {version}")
    if len(data) < 12 + hlen:
        raise PolicyFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:12 + hlen])
    except ValueError as exc:
        raise PolicyFormatError(f"{path}: corrupt header") from exc
    shapes = header["shapes"]
    if len(shapes) != 4 or shapes[0][0] != OBS_DIM or shapes[2][1] != N_ACTIONS:
        raise PolicyFormatError(f"{path}: unexpected layer shapes {shapes}")
    n = sum(int(np.prod(s)) for s in shapes)
    block = data[12 + hlen:]
    if len(block) != 8 * n:
        raise PolicyFormatError(f"{path}: expected {8 * n} parameter bytes, found {len(block)}")
    flat = np.frombuffer(block, dtype="<f8").astype(np.float64)
    params = mlp.MlpParams.from_flat(flat, shapes)
    return QFunction(params, header["metadata"], header["obs_shift"], header["obs_scale"],
                     header["value_scale"])


def make_env_factory(params: EnvParams):
    def factory(weights: RewardWeights) -> MergeEnv:
        return MergeEnv(params, weights)
    return factory
