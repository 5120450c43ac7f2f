"""Collect states where two greedy policies disagree and branch both from them."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .qpolicy import act_greedy, greedy_action
from .sim_env import OBS_DIM, TOKEN_SIZE, MergeEnv

log = logging.getLogger(__name__)

SCHEMA = "disagreement-set/1"


class SchemaError(ValueError):
    pass


class ProvenanceMismatch(ValueError):
    pass


@dataclass
class Trajectory:
    obs: np.ndarray  # (len, 10), first row is the disagreement state
    actions: np.ndarray  # action taken in each state; -1 after a terminal

    def __len__(self) -> int:
        return len(self.obs)


@dataclass
class Disagreement:
    sd_obs: np.ndarray
    sd_token: bytes
    a_A: int
    a_B: int
    traj_A: Trajectory
    traj_B: Trajectory
    oA_token: bytes
    oB_token: bytes
    qA_sd: np.ndarray
    qB_sd: np.ndarray
    qA_oA: np.ndarray
    qB_oB: np.ndarray
    episode: int = 0
    step: int = 0

    @property
    def o_A(self) -> np.ndarray:
        return self.traj_A.obs[-1]

    @property
    def o_B(self) -> np.ndarray:
        return self.traj_B.obs[-1]


@dataclass
class DisagreementSet:
    records: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


def env_hash(env: MergeEnv) -> str:
    payload = json.dumps(env.params.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def _branch(env: MergeEnv, policy, first_action: int, k: int) -> Trajectory:
    obs = [env.observe()]
    actions = []
    action = first_action
    for _ in range(k):
        if env.done:
            break
        actions.append(action)
        env.step(action)
        obs.append(env.observe())
        if not env.done:
            action = act_greedy(policy, obs[-1])
    actions.append(-1 if env.done else act_greedy(policy, obs[-1]))
    return Trajectory(np.array(obs), np.array(actions, dtype=np.int64))


def collect(env: MergeEnv, policy_a, policy_b, n: int, k: int, seed: int = 0) -> DisagreementSet:
    """Drive ``n`` episodes with ``policy_a`` and record every disagreement.

    At a disagreement both policies are rolled out for up to ``k`` steps from
    the same snapshot. Control then resumes from the end of ``policy_a``'s
    branch. Branches stop early when the episode ends.
    """
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    streams = np.random.SeedSequence(seed).spawn(n)
    records = []
    aborted = 0
    for ep, ss in enumerate(streams):
        env.reset(np.random.default_rng(ss))
        try:
            while not env.done:
                obs = env.observe()
                q_a = policy_a.q_values(obs)
                q_b = policy_b.q_values(obs)
                a_a, a_b = greedy_action(q_a), greedy_action(q_b)
                if a_a == a_b:
                    env.step(a_a)
                    continue
                t = env.state.step
                sd_token = env.snapshot()
                traj_a = _branch(env, policy_a, a_a, k)
                oa_token = env.snapshot()
                env.restore(sd_token)
                traj_b = _branch(env, policy_b, a_b, k)
                ob_token = env.snapshot()
                env.restore(oa_token)
                records.append(Disagreement(
                    sd_obs=obs, sd_token=sd_token, a_A=a_a, a_B=a_b,
                    traj_A=traj_a, traj_B=traj_b, oA_token=oa_token, oB_token=ob_token,
                    qA_sd=q_a, qB_sd=q_b,
                    qA_oA=policy_a.q_values(traj_a.obs[-1]),
                    qB_oB=policy_b.q_values(traj_b.obs[-1]),
                    episode=ep, step=t,
                ))
        except Exception as exc:  # environment fault: end the episode, lose the open record
            log.warning("episode %d aborted during collection: %s", ep, exc)
            aborted += 1
    provenance = {
        "policy_a": getattr(policy_a, "name", "A"),
        "policy_b": getattr(policy_b, "name", "B"),
        "n": n,
        "k": k,
        "seed": seed,
        "env_hash": env_hash(env),
        "aborted_episodes": aborted,
    }
    return DisagreementSet(records, provenance)


# ---------------------------------------------------------------- file format

def _pad(trajs, k: int):
    m = len(trajs)
    obs = np.full((m, k + 1, OBS_DIM), np.nan)
    act = np.full((m, k + 1), -2, dtype=np.int64)
    lens = np.zeros(m, dtype=np.int64)
    for i, tr in enumerate(trajs):
        L = len(tr)
        obs[i, :L] = tr.obs
        act[i, :L] = tr.actions
        lens[i] = L
    return obs, act, lens


def _tokens(tokens) -> np.ndarray:
    if not tokens:
        return np.zeros((0, TOKEN_SIZE), dtype=np.uint8)
    return np.frombuffer(b"".join(tokens), dtype=np.uint8).reshape(len(tokens), -1)


def set_columns(ds: DisagreementSet) -> dict:
    recs = ds.records
    k = int(ds.provenance.get("k", max((len(r.traj_A) for r in recs), default=1) - 1))
    a_obs, a_act, a_len = _pad([r.traj_A for r in recs], k)
    b_obs, b_act, b_len = _pad([r.traj_B for r in recs], k)

    def stack(attr, width):
        return np.array([getattr(r, attr) for r in recs], dtype=np.float64).reshape(len(recs), width)

    return {
        "sd_obs": stack("sd_obs", OBS_DIM),
        "sd_token": _tokens([r.sd_token for r in recs]),
        "a_A": np.array([r.a_A for r in recs], dtype=np.int64),
        "a_B": np.array([r.a_B for r in recs], dtype=np.int64),
        "trajA_obs": a_obs, "trajA_act": a_act, "trajA_len": a_len,
        "trajB_obs": b_obs, "trajB_act": b_act, "trajB_len": b_len,
        "oA_token": _tokens([r.oA_token for r in recs]),
        "oB_token": _tokens([r.oB_token for r in recs]),
        "qA_sd": stack("qA_sd", 5), "qB_sd": stack("qB_sd", 5),
        "qA_oA": stack("qA_oA", 5), "qB_oB": stack("qB_oB", 5),
        "episode": np.array([r.episode for r in recs], dtype=np.int64),
        "step": np.array([r.step for r in recs], dtype=np.int64),
    }


def records_from_columns(cols: dict) -> list:
    records = []
    for i in range(len(cols["a_A"])):
        la, lb = int(cols["trajA_len"][i]), int(cols["trajB_len"][i])
        records.append(Disagreement(
            sd_obs=cols["sd_obs"][i].copy(),
            sd_token=cols["sd_token"][i].tobytes(),
            a_A=int(cols["a_A"][i]), a_B=int(cols["a_B"][i]),
            traj_A=Trajectory(cols["trajA_obs"][i, :la].copy(), cols["trajA_act"][i, :la].copy()),
            traj_B=Trajectory(cols["trajB_obs"][i, :lb].copy(), cols["trajB_act"][i, :lb].copy()),
            oA_token=cols["oA_token"][i].tobytes(), oB_token=cols["oB_token"][i].tobytes(),
            qA_sd=cols["qA_sd"][i].copy(), qB_sd=cols["qB_sd"][i].copy(),
            qA_oA=cols["qA_oA"][i].copy(), qB_oB=cols["qB_oB"][i].copy(),
            episode=int(cols["episode"][i]), step=int(cols["step"][i]),
        ))
    return records


def _header_array(header: dict) -> np.ndarray:
    return np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)


def write_columns(path: str | Path, header: dict, cols: dict) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, header=_header_array(header), **cols)


def read_columns(path: str | Path, schema: str) -> tuple:
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(data["header"].tobytes())
            cols = {key: data[key] for key in data.files if key != "header"}
    except (OSError, ValueError, KeyError) as exc:
        raise SchemaError(f"{path}: unreadable disagreement file ({exc})") from exc
    if header.get("schema") != schema:
        raise SchemaError(f"{path}: expected schema {schema!r}, found {header.get('schema')!r}")
    missing = set(header.get("columns", [])) - set(cols)
    if missing:
        raise SchemaError(f"{path}: missing columns {sorted(missing)}")
    return header, cols


def check_provenance(found: dict, expected: dict | None, path="") -> None:
    if not expected:
        return
    diffs = {k: (found.get(k), v) for k, v in expected.items() if found.get(k) != v}
    if diffs:
        detail = ", ".join(f"{k}: file={f!r} expected={e!r}" for k, (f, e) in diffs.items())
        raise ProvenanceMismatch(f"{path}: provenance mismatch ({detail})")


def save_set(ds: DisagreementSet, path: str | Path) -> None:
    cols = set_columns(ds)
    header = {"schema": SCHEMA, "provenance": ds.provenance, "count": len(ds),
              "columns": sorted(cols)}
    write_columns(path, header, cols)


def load_set(path: str | Path, expect: dict | None = None) -> DisagreementSet:
    """Load a set; ``expect`` lists provenance fields that must match."""
    header, cols = read_columns(path, SCHEMA)
    prov = header["provenance"]
    check_provenance(prov, expect, path)
    return DisagreementSet(records_from_columns(cols), prov)
