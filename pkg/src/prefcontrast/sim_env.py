"""Three-lane merging task.

The autonomous car starts in the centre lane and has to merge into the right
lane, which is occupied by a second car driving straight at constant speed.
Both cars follow a rear-axle kinematic bicycle model. Coordinates: ``x`` is
lateral (lanes span ``[0, num_lanes * lane_width]``), ``y`` is longitudinal,
heading ``h`` is in radians measured from the lane direction and the steering
angle ``u`` is in degrees.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, read_config

N_ACTIONS = 5
OBS_DIM = 10
FEATURE_NAMES = ("x", "y", "h", "v", "u", "x'", "y'", "h'", "v'", "u'")


class Action(enum.IntEnum):
    ACCELERATE = 0
    DECELERATE = 1
    STEER_LEFT = 2
    STEER_RIGHT = 3
    NOOP = 4


class Reason(enum.IntEnum):
    NONE = 0
    MERGED = 1
    CRASHED = 2
    MAX_STEPS = 3


class TerminalStateError(RuntimeError):
    """Raised when stepping a state whose episode already ended."""


class CorruptTokenError(ValueError):
    pass


@dataclass(frozen=True)
class EnvParams:
    num_lanes: int = 3
    lane_width: float = 10.0
    car_length: float = 10.0
    v_init: float = 15.0
    v_max: float = 20.0
    steer_min: float = -30.0
    steer_max: float = 30.0
    dt: float = 0.1
    car_width: float = 5.0
    max_steps: int = 200
    sigma: float = math.sqrt(5.0)
    spawn_min: float = -20.0
    spawn_max: float = 20.0
    x_goal: float = 25.0
    speed_factor: float = 0.1
    steer_step: float = 3.0
    merge_tol_x: float = 1.0
    merge_tol_h: float = 15.0
    merge_bonus: float = 1000.0
    crash_penalty: float = 1000.0
    offroad_penalty: float = 10.0
    goal_norm: float = 30.0
    steer_norm: float = 60.0

    def __post_init__(self):
        if self.num_lanes < 2:
            raise ConfigError("num_lanes must be >= 2")
        if self.spawn_min > self.spawn_max:
            raise ConfigError("spawn_min > spawn_max")
        if self.steer_min >= self.steer_max:
            raise ConfigError("steer_min must be below steer_max")
        if self.dt <= 0 or self.v_max <= 0 or self.car_length <= 0:
            raise ConfigError("dt, v_max and car_length must be positive")

    @property
    def road_width(self) -> float:
        return self.num_lanes * self.lane_width

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width

    @classmethod
    def from_dict(cls, values: dict) -> "EnvParams":
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in values.items() if k in names}
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "EnvParams":
        return cls.from_dict(read_config(path))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    h: float
    v: float
    u: float

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.h, self.v, self.u)


@dataclass(frozen=True)
class WorldState:
    agent: VehicleState
    other: VehicleState
    step: int = 0
    reason: Reason = Reason.NONE

    @property
    def terminal(self) -> bool:
        return self.reason != Reason.NONE


@dataclass(frozen=True)
class FeatureVector:
    d_goal: float
    d_car: float
    d_vel: float
    d_steer: float
    d_prog: float

    def as_array(self) -> np.ndarray:
        return np.array([self.d_goal, self.d_car, self.d_vel, self.d_steer, self.d_prog])


@dataclass(frozen=True)
class StepResult:
    next: WorldState
    reward: float
    features: FeatureVector
    offroad: bool = False

    @property
    def terminal(self) -> bool:
        return self.next.terminal

    @property
    def reason(self) -> Reason:
        return self.next.reason


@dataclass(frozen=True)
class RewardWeights:
    """Weights for [goal distance, car proximity, speed deviation, steering, progress]."""

    theta: tuple = field(default=(5.0, 10.0, 20.0, 50.0, 0.0))

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        if len(theta) != 5:
            raise ValueError(f"expected 5 reward weights, got {len(theta)}")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def with_progress(cls, p: float, base=(5.0, 10.0, 20.0, 50.0)) -> "RewardWeights":
        return cls(tuple(base) + (float(p),))


SAFE_WEIGHTS = RewardWeights((5.0, 10.0, 20.0, 50.0, 0.0))


def _clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def initial_state(params: EnvParams, offset: float = 0.0) -> WorldState:
    """State at the start of an episode; ``offset`` is other.y - agent.y."""
    v0 = params.v_init
    agent = VehicleState(params.lane_center(params.num_lanes // 2), 0.0, 0.0, v0, 0.0)
    other = VehicleState(params.lane_center(params.num_lanes - 1), float(offset), 0.0, v0, 0.0)
    return WorldState(agent, other, 0, Reason.NONE)


def reset(rng: np.random.Generator, params: EnvParams = EnvParams()) -> WorldState:
    offset = params.spawn_min
    if params.spawn_max > params.spawn_min:
        offset = rng.uniform(params.spawn_min, params.spawn_max)
    return initial_state(params, offset)


def apply_action(car: VehicleState, action: int, params: EnvParams) -> VehicleState:
    v, u = car.v, car.u
    if action == Action.ACCELERATE:
        v = _clamp(v * (1.0 + params.speed_factor), 0.0, params.v_max)
    elif action == Action.DECELERATE:
        v = _clamp(v * (1.0 - params.speed_factor), 0.0, params.v_max)
    elif action == Action.STEER_LEFT:
        u = _clamp(u - params.steer_step, params.steer_min, params.steer_max)
    elif action == Action.STEER_RIGHT:
        u = _clamp(u + params.steer_step, params.steer_min, params.steer_max)
    elif action != Action.NOOP:
        raise ValueError(f"unknown action {action!r}")
    return VehicleState(car.x, car.y, car.h, v, u)


def bicycle_step(car: VehicleState, params: EnvParams) -> VehicleState:
    dt = params.dt
    x = car.x + car.v * math.sin(car.h) * dt
    y = car.y + car.v * math.cos(car.h) * dt
    h = car.h + car.v / params.car_length * math.tan(math.radians(car.u)) * dt
    # keep heading in [-pi, pi] so a car that turns full circle reads as aligned again
    return VehicleState(x, y, math.remainder(h, 2.0 * math.pi), car.v, car.u)


def _footprint(car: VehicleState, params: EnvParams) -> tuple:
    half = params.car_width / 2.0
    return car.x - half, car.x + half, car.y, car.y + params.car_length


def crashed(s: WorldState, params: EnvParams) -> bool:
    ax0, ax1, ay0, ay1 = _footprint(s.agent, params)
    bx0, bx1, by0, by1 = _footprint(s.other, params)
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1


def merged(s: WorldState, params: EnvParams) -> bool:
    return (abs(s.agent.x - params.x_goal) < params.merge_tol_x
            and abs(math.degrees(s.agent.h)) < params.merge_tol_h)


def offroad(s: WorldState, params: EnvParams) -> bool:
    half = params.car_width / 2.0
    return s.agent.x - half < 0.0 or s.agent.x + half > params.road_width


def reward_features(prev: WorldState, cur: WorldState, params: EnvParams = EnvParams()) -> FeatureVector:
    a, o = cur.agent, cur.other
    d_goal = max(0.0, abs(params.x_goal - a.x)) / params.goal_norm
    dist = math.hypot(a.x - o.x, a.y - o.y)
    d_car = math.exp(-dist / (2.0 * params.sigma ** 2))
    d_vel = abs(a.v - params.v_init) / params.v_max
    d_steer = abs(a.u - 0.0) / params.steer_norm
    d_prog = abs(a.y - prev.agent.y) / (params.v_max * params.dt)
    return FeatureVector(
        _clamp(d_goal, 0.0, 1.0),
        _clamp(d_car, 0.0, 1.0),
        _clamp(d_vel, 0.0, 1.0),
        _clamp(d_steer, 0.0, 1.0),
        _clamp(d_prog, 0.0, 1.0),
    )


def reward_total(features: FeatureVector, weights: RewardWeights, reason: Reason = Reason.NONE,
                 is_offroad: bool = False, params: EnvParams = EnvParams()) -> float:
    """Shaped step reward plus terminal bonuses.

    Goal distance, proximity, speed and steering deviation are costs; progress
    is a reward. Weights enter by magnitude so the sign is fixed by the feature.
    """
    w = weights.theta
    r = (-abs(w[0]) * features.d_goal - abs(w[1]) * features.d_car
         - abs(w[2]) * features.d_vel - abs(w[3]) * features.d_steer
         + abs(w[4]) * features.d_prog)
    if reason == Reason.MERGED:
        r += params.merge_bonus
    elif reason == Reason.CRASHED:
        r -= params.crash_penalty
    if is_offroad:
        r -= params.offroad_penalty
    return r


def step(s: WorldState, action: int, weights: RewardWeights = SAFE_WEIGHTS,
         params: EnvParams = EnvParams()) -> StepResult:
    """Pure transition: apply the action, integrate one step, score it."""
    if s.terminal:
        raise TerminalStateError(f"cannot step a terminal state ({s.reason.name})")
    agent = bicycle_step(apply_action(s.agent, action, params), params)
    other = bicycle_step(s.other, params)
    cur = WorldState(agent, other, s.step + 1, Reason.NONE)
    if crashed(cur, params):
        reason = Reason.CRASHED
    elif merged(cur, params):
        reason = Reason.MERGED
    elif cur.step >= params.max_steps:
        reason = Reason.MAX_STEPS
    else:
        reason = Reason.NONE
    cur = WorldState(agent, other, cur.step, reason)
    feats = reward_features(s, cur, params)
    off = offroad(cur, params)
    return StepResult(cur, reward_total(feats, weights, reason, off, params), feats, off)


def observe(s: WorldState) -> np.ndarray:
    return np.array(s.agent.as_tuple() + s.other.as_tuple(), dtype=np.float64)


_TOKEN = struct.Struct("<4s10dii")
_MAGIC = b"MWS1"
TOKEN_SIZE = _TOKEN.size + 4


def snapshot(s: WorldState) -> bytes:
    body = _TOKEN.pack(_MAGIC, *s.agent.as_tuple(), *s.other.as_tuple(), s.step, int(s.reason))
    return body + struct.pack("<I", zlib.crc32(body))


def restore(token: bytes) -> WorldState:
    if not isinstance(token, (bytes, bytearray)) or len(token) != TOKEN_SIZE:
        raise CorruptTokenError("state token has the wrong size")
    body, (crc,) = bytes(token[:-4]), struct.unpack("<I", token[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptTokenError("state token checksum mismatch")
    magic, *vals, stp, reason = _TOKEN.unpack(body)
    if magic != _MAGIC:
        raise CorruptTokenError("not a world-state token")
    return WorldState(VehicleState(*vals[:5]), VehicleState(*vals[5:]), stp, Reason(reason))


class MergeEnv:
    """Stateful wrapper around :func:`step` with snapshot/restore."""

    def __init__(self, params: EnvParams = EnvParams(), weights: RewardWeights = SAFE_WEIGHTS):
        self.params = params
        self.weights = weights
        self.state: WorldState | None = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = reset(rng, self.params)
        return observe(self.state)

    def step(self, action: int) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() first")
        result = step(self.state, action, self.weights, self.params)
        self.state = result.next
        return result

    def observe(self) -> np.ndarray:
        return observe(self.state)

    def snapshot(self) -> bytes:
        return snapshot(self.state)

    def restore(self, token: bytes) -> np.ndarray:
        self.state = restore(token)
        return observe(self.state)

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.terminal
