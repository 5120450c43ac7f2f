import time

import numpy as np
import pytest
from helpers import TablePolicy, random_set

from prefcontrast import mlp
from prefcontrast.disagree import (ProvenanceMismatch, SchemaError, collect, load_set, save_set)
from prefcontrast.qpolicy import QFunction
from prefcontrast.sim_env import Action, EnvParams, MergeEnv, observe, restore, snapshot

QUIET = EnvParams(spawn_min=40.0, spawn_max=40.0)


def noop(obs):
    return Action.NOOP


def accelerate_at_step5(obs):
    # under NoOp the agent advances 1.5 per step, so y = 7.5 only at step 5
    return Action.ACCELERATE if abs(obs[1] - 7.5) < 0.01 else Action.NOOP


def random_policy(seed, name):
    return QFunction(mlp.MlpParams.init(np.random.default_rng(seed), 10, 16, 5), {"name": name})


def test_identical_policies_never_disagree():
    q = random_policy(0, "a")
    twin = QFunction(q.params, {"name": "b"})
    ds = collect(MergeEnv(), q, twin, n=5, k=10, seed=1)
    assert len(ds) == 0
    assert ds.provenance["n"] == 5 and ds.provenance["k"] == 10


def test_single_scripted_disagreement():
    k = 10
    ds = collect(MergeEnv(QUIET), TablePolicy(noop, "A"), TablePolicy(accelerate_at_step5, "B"),
                 n=1, k=k, seed=0)
    assert len(ds) == 1
    d = ds[0]
    assert d.step == 5 and d.a_A == Action.NOOP and d.a_B == Action.ACCELERATE
    assert len(d.traj_A) == len(d.traj_B) == k + 1
    assert np.array_equal(d.traj_A.obs[0], d.sd_obs) and np.array_equal(d.traj_B.obs[0], d.sd_obs)
    assert np.array_equal(d.o_A, observe(restore(d.oA_token)))
    assert np.array_equal(d.o_B, observe(restore(d.oB_token)))
    assert d.o_B[3] == pytest.approx(16.5)
    assert d.traj_A.actions[0] == Action.NOOP and d.traj_B.actions[0] == Action.ACCELERATE


def test_resume_from_policy_a_outcome():
    """After a disagreement the main rollout continues from o_A."""

    class Recorder(TablePolicy):
        def __init__(self):
            super().__init__(noop, "A")
            self.seen = []

        def q_values(self, obs):
            self.seen.append(np.array(obs))
            return super().q_values(obs)

    a = Recorder()
    ds = collect(MergeEnv(QUIET), a, TablePolicy(accelerate_at_step5, "B"), n=1, k=4, seed=0)
    d = ds[0]
    # main-loop queries at s_d, then the branch, then the next main query must be at o_A
    ys = [round(o[1], 6) for o in a.seen]
    i = ys.index(round(d.sd_obs[1], 6))
    after = [y for y in ys[i + 1:] if y > d.o_A[1] - 1e-9]
    assert after[0] == pytest.approx(d.o_A[1])
    assert d.o_A[1] == pytest.approx(d.sd_obs[1] + 4 * 1.5)


def test_branch_truncates_at_terminal():
    # A steers right into the other car's lane while B holds its lane
    env = EnvParams(spawn_min=0.0, spawn_max=0.0)
    steer = TablePolicy(lambda o: Action.STEER_RIGHT if o[0] < 20 else Action.NOOP, "A")
    ds = collect(MergeEnv(env), steer, TablePolicy(noop, "B"), n=1, k=200, seed=0)
    assert len(ds) >= 1
    d = ds[0]
    assert len(d.traj_A) < 201
    assert d.traj_A.actions[-1] == -1
    assert restore(d.oA_token).terminal


def test_collection_is_deterministic():
    a, b = random_policy(1, "a"), random_policy(2, "b")
    one = collect(MergeEnv(), a, b, n=3, k=5, seed=7)
    two = collect(MergeEnv(), a, b, n=3, k=5, seed=7)
    assert len(one) == len(two) > 0
    for x, y in zip(one, two):
        assert x.sd_token == y.sd_token and x.oA_token == y.oA_token and x.oB_token == y.oB_token
        assert np.array_equal(x.traj_B.obs, y.traj_B.obs)


def test_cached_q_values_match_policies():
    a, b = random_policy(3, "a"), random_policy(4, "b")
    ds = collect(MergeEnv(), a, b, n=3, k=5, seed=2)
    assert len(ds) > 0
    for d in ds:
        assert d.a_A != d.a_B
        assert np.array_equal(d.qA_sd, a.q_values(d.sd_obs))
        assert np.array_equal(d.qB_sd, b.q_values(d.sd_obs))
        assert np.array_equal(d.qA_oA, a.q_values(d.o_A))
        assert np.array_equal(d.qB_oB, b.q_values(d.o_B))
        assert np.array_equal(observe(restore(d.sd_token)), d.sd_obs)
        assert 1 <= len(d.traj_A) <= 6 and 1 <= len(d.traj_B) <= 6


def test_fault_aborts_episode_but_keeps_finished_records():
    class Faulty(TablePolicy):
        def q_values(self, obs):
            if obs[1] > 28.0:  # inside the branch from the second disagreement (y = 27)
                raise FloatingPointError("simulated fault")
            return super().q_values(obs)

    flip = TablePolicy(lambda o: Action.ACCELERATE if abs(o[1] - 7.5) < 0.01 or abs(o[1] - 27.0) < 0.01
                       else Action.NOOP, "B")
    ds = collect(MergeEnv(QUIET), Faulty(noop, "A"), flip, n=2, k=2, seed=0)
    assert ds.provenance["aborted_episodes"] == 2
    assert [d.step for d in ds] == [5, 5]


def test_argument_validation():
    q = random_policy(0, "a")
    with pytest.raises(ValueError):
        collect(MergeEnv(), q, q, n=0, k=3)
    with pytest.raises(ValueError):
        collect(MergeEnv(), q, q, n=1, k=0)


def test_save_load_round_trip(tmp_path):
    a, b = random_policy(5, "a"), random_policy(6, "b")
    ds = collect(MergeEnv(), a, b, n=2, k=4, seed=3)
    ds.records = ds.records[:3]
    path = tmp_path / "d.npz"
    save_set(ds, path)
    back = load_set(path)
    assert back.provenance == ds.provenance
    assert len(back) == 3
    for x, y in zip(ds, back):
        for attr in ("sd_obs", "qA_sd", "qB_sd", "qA_oA", "qB_oB"):
            assert np.array_equal(getattr(x, attr), getattr(y, attr))
        assert (x.sd_token, x.oA_token, x.oB_token) == (y.sd_token, y.oA_token, y.oB_token)
        assert np.array_equal(x.traj_A.obs, y.traj_A.obs)
        assert np.array_equal(x.traj_B.actions, y.traj_B.actions)
        assert (x.a_A, x.a_B, x.episode, x.step) == (y.a_A, y.a_B, y.episode, y.step)


def test_provenance_mismatch_is_reported(tmp_path):
    ds = random_set(3)
    path = tmp_path / "d.npz"
    save_set(ds, path)
    assert len(load_set(path, expect={"k": 1})) == 3
    with pytest.raises(ProvenanceMismatch, match="k"):
        load_set(path, expect={"k": 10})


def test_bad_files(tmp_path):
    junk = tmp_path / "junk.npz"
    junk.write_bytes(b"not a zip")
    with pytest.raises(SchemaError):
        load_set(junk)
    other = tmp_path / "other.npz"
    np.savez(other, header=np.frombuffer(b'{"schema": "x/1"}', dtype=np.uint8))
    with pytest.raises(SchemaError):
        load_set(other)


def test_large_round_trip_is_fast(tmp_path):
    ds = random_set(10_000, seed=9)
    path = tmp_path / "big.npz"
    t0 = time.perf_counter()
    save_set(ds, path)
    back = load_set(path)
    elapsed = time.perf_counter() - t0
    assert len(back) == 10_000
    assert elapsed < 1.0


def test_snapshot_helper_consistency():
    env = MergeEnv(QUIET)
    env.reset(np.random.default_rng(0))
    assert env.snapshot() == snapshot(env.state)
