"""Experiment orchestration: policy suite, evaluation scenarios, behaviour stats."""

from __future__ import annotations

import dataclasses
import logging
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import disagree, explain, pref_filter
from .config import ConfigError, read_config
from .qpolicy import (QFunction, TrainConfig, TrainingDivergedError, act_greedy, load_policy,
                      make_env_factory, save_policy, train_dqn, write_trace)
from .sim_env import EnvParams, MergeEnv, Reason, RewardWeights, observe, reset, step

log = logging.getLogger(__name__)

PROFILES = {
    "fast": {"train_steps": 20_000, "safe_steps": 20_000, "rand_steps": 2_000, "n_episodes": 100},
    "full": {"train_steps": 100_000, "safe_steps": 100_000, "rand_steps": 10_000, "n_episodes": 1000},
}
SCENARIOS = ("safe", "B", "rand")


def derive_seed(master: int, label: str) -> int:
    """Independent 32-bit seed for a named job, fixed by the master seed."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(label.encode())])
    return int(ss.generate_state(1)[0])


@dataclass
class ExperimentConfig:
    p_list: tuple = (0, 1, 2, 3, 4)
    base_theta: tuple = (5.0, 10.0, 20.0, 50.0)
    safe_progress: float = 0.0
    train_steps: int = 100_000
    safe_steps: int = 100_000
    rand_steps: int = 10_000
    n_episodes: int = 1000
    k: int = 10
    alpha: float = 0.8
    beta: float = 0.1
    gamma: float = 0.1
    p_thres: float = 0.05
    seed: int = 0
    eval_episodes: int = 100
    profile: str = "full"
    out_dir: str = "runs/experiment"
    env: EnvParams = field(default_factory=EnvParams)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        self.p_list = tuple(self.p_list) if isinstance(self.p_list, (list, tuple)) else (self.p_list,)
        self.base_theta = tuple(float(t) for t in self.base_theta)
        if len(self.base_theta) != 4:
            raise ConfigError("base_theta needs the four non-progress weights")
        if self.n_episodes < 1 or self.k < 1 or self.eval_episodes < 1:
            raise ConfigError("n_episodes, k and eval_episodes must be positive")
        pref_filter.FilterThresholds(self.alpha, self.beta, self.gamma)

    @property
    def thresholds(self) -> pref_filter.FilterThresholds:
        return pref_filter.FilterThresholds(self.alpha, self.beta, self.gamma)

    @classmethod
    def from_dict(cls, values: dict, profile: str | None = None) -> "ExperimentConfig":
        values = dict(values)
        profile = profile or values.pop("profile", "full")
        values.pop("profile", None)
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}")
        merged = {**PROFILES[profile], **values}
        own = {f.name for f in dataclasses.fields(cls)} - {"env", "train"}
        kwargs = {k: v for k, v in merged.items() if k in own}
        train_names = {f.name for f in dataclasses.fields(TrainConfig)}
        env_names = {f.name for f in dataclasses.fields(EnvParams)}
        unknown = set(merged) - own - train_names - env_names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(profile=profile, env=EnvParams.from_dict(merged),
                   train=TrainConfig.from_dict(merged), **kwargs)

    @classmethod
    def from_file(cls, path: str | Path | None, profile: str | None = None, **overrides):
        values = read_config(path) if path else {}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(values, profile)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
               if f.name not in ("env", "train")}
        out["p_list"] = list(self.p_list)
        out["base_theta"] = list(self.base_theta)
        out["env"] = self.env.to_dict()
        out["train"] = dataclasses.asdict(self.train)
        return out


@dataclass(frozen=True)
class PolicySpec:
    name: str
    weights: RewardWeights
    steps: int
    p: float | None = None


def policy_specs(cfg: ExperimentConfig) -> list:
    specs = [PolicySpec("safe", RewardWeights(cfg.base_theta + (cfg.safe_progress,)), cfg.safe_steps)]
    for p in cfg.p_list:
        w = RewardWeights.with_progress(p, cfg.base_theta)
        specs.append(PolicySpec(f"A_p{p}", w, cfg.train_steps, p))
        specs.append(PolicySpec(f"B_p{p}", w, cfg.train_steps, p))
        specs.append(PolicySpec(f"rand_p{p}", w, cfg.rand_steps, p))
    return specs


def _train_config(cfg: ExperimentConfig, spec: PolicySpec) -> TrainConfig:
    return dataclasses.replace(cfg.train, total_steps=spec.steps,
                               seed=derive_seed(cfg.seed, f"train/{spec.name}"))


@dataclass
class TrainSuite:
    registry: dict
    failures: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)


def train_suite(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                names: list | None = None, reuse: bool = True) -> TrainSuite:
    """Train (or reload) every policy of the experiment.

    A policy file whose seed, step count, reward weights, training config and
    environment all match is reused instead of retrained.
    """
    out = Path(out_dir or cfg.out_dir)
    (out / "policies").mkdir(parents=True, exist_ok=True)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    factory = make_env_factory(cfg.env)
    suite = TrainSuite({})
    for spec in policy_specs(cfg):
        if names and spec.name not in names:
            continue
        tcfg = _train_config(cfg, spec)
        path = out / "policies" / f"{spec.name}.pqf"
        fingerprint = {"train_config": dataclasses.asdict(tcfg), "env": cfg.env.to_dict()}
        if reuse and path.exists():
            try:
                q = load_policy(path)
            except ValueError:
                q = None
            if q is not None and all(q.metadata.get(k) == v for k, v in fingerprint.items()):
                suite.registry[spec.name] = q
                continue
        t0 = time.perf_counter()
        try:
            result = train_dqn(factory, spec.weights, tcfg, name=spec.name)
        except TrainingDivergedError as exc:
            log.error("training failed for %s: %s", spec.name, exc)
            suite.failures[spec.name] = str(exc)
            continue
        suite.seconds[spec.name] = time.perf_counter() - t0
        q = QFunction(result.policy.params, {**result.policy.metadata, **fingerprint, "p": spec.p},
                      value_scale=result.policy.value_scale)
        save_policy(q, path)
        write_trace(result.trace, out / "traces" / f"{spec.name}.csv")
        suite.registry[spec.name] = q
    return suite


@dataclass
class BehaviorStats:
    avg_merge_y_distance: float
    avg_velocity: float
    merged: int
    crashed: int
    timed_out: int

    @property
    def episodes(self) -> int:
        return self.merged + self.crashed + self.timed_out


def behavior_stats(policy, env_params: EnvParams, episodes: int = 100, seed: int = 0) -> BehaviorStats:
    """Greedy rollouts: mean y-offset to the other car at the merge and mean speed.

    The y-offset is agent.y - other.y at the merging step (negative means the
    agent merged behind). Episodes without a merge are left out of that mean.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(episodes)
    ydist, speeds = [], []
    counts = {Reason.MERGED: 0, Reason.CRASHED: 0, Reason.MAX_STEPS: 0}
    weights = RewardWeights()
    for ss in streams:
        s = reset(np.random.default_rng(ss), env_params)
        while not s.terminal:
            s = step(s, act_greedy(policy, observe(s)), weights, env_params).next
            speeds.append(s.agent.v)
        counts[s.reason] += 1
        if s.reason == Reason.MERGED:
            ydist.append(s.agent.y - s.other.y)
    return BehaviorStats(float(np.mean(ydist)) if ydist else float("nan"), float(np.mean(speeds)),
                         counts[Reason.MERGED], counts[Reason.CRASHED], counts[Reason.MAX_STEPS])


@dataclass
class ScenarioRow:
    p: float
    scenario: str
    policy_a: str
    policy_b: str
    total: int = 0
    preference: int = 0
    explanation: explain.Explanation | None = None
    skipped: bool = False
    note: str = ""


@dataclass
class ScenarioReport:
    rows: list = field(default_factory=list)
    behavior: dict = field(default_factory=dict)  # policy name -> BehaviorStats
    config: dict = field(default_factory=dict)


def compare(cfg: ExperimentConfig, policy_a, policy_b, label: str, out_dir: Path | None = None):
    """Collect, filter and explain one policy pair."""
    env = MergeEnv(cfg.env)
    ds = disagree.collect(env, policy_a, policy_b, cfg.n_episodes, cfg.k,
                          seed=derive_seed(cfg.seed, f"collect/{label}"))
    if len(ds) == 0:
        return ds, None, None
    ps = pref_filter.filter_set(ds, cfg.thresholds)
    expl = None
    if len(ps) > 0:
        expl = explain.generate_explanation(ps, cfg.p_thres, policy_a.name, policy_b.name)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        disagree.save_set(ds, out_dir / f"{label}.disagreements.npz")
        pref_filter.save_preference_set(ps, out_dir / f"{label}.preferences.npz")
    return ds, ps, expl


def run_scenarios(cfg: ExperimentConfig, registry: dict, save_sets: bool = False) -> ScenarioReport:
    # the output location is not part of the result, so runs in different directories compare equal
    report = ScenarioReport(config={k: v for k, v in cfg.to_dict().items() if k != "out_dir"})
    sets_dir = Path(cfg.out_dir) / "sets" if save_sets else None
    for p in cfg.p_list:
        name_a = f"A_p{p}"
        for scenario in SCENARIOS:
            name_b = "safe" if scenario == "safe" else f"{scenario}_p{p}"
            row = ScenarioRow(p, scenario, name_a, name_b)
            report.rows.append(row)
            if name_a not in registry or name_b not in registry:
                row.skipped = True
                row.note = "missing policy"
                continue
            ds, ps, expl = compare(cfg, registry[name_a], registry[name_b], f"p{p}_{scenario}", sets_dir)
            row.total = len(ds)
            row.preference = len(ps) if ps is not None else 0
            row.explanation = expl
    behavior_seed = derive_seed(cfg.seed, "behavior")
    for name in sorted(registry, key=_policy_order):
        report.behavior[name] = behavior_stats(registry[name], cfg.env, cfg.eval_episodes, behavior_seed)
    return report


def _policy_order(name: str):
    if name == "safe":
        return (0, 0.0, "")
    kind, _, p = name.partition("_p")
    return (1, float(p) if p else 0.0, kind)


def run_experiment(cfg: ExperimentConfig, save_sets: bool = False) -> tuple:
    """Train the suite, run all scenarios and write the report files."""
    from .report import emit_report

    t0 = time.perf_counter()
    suite = train_suite(cfg)
    t1 = time.perf_counter()
    report = run_scenarios(cfg, suite.registry, save_sets=save_sets)
    report.config["training_failures"] = suite.failures
    t2 = time.perf_counter()
    paths = emit_report(report, cfg.out_dir)
    timing = {"train_seconds": t1 - t0, "scenario_seconds": t2 - t1,
              "total_seconds": time.perf_counter() - t0, "per_policy": suite.seconds}
    return report, paths, timing
