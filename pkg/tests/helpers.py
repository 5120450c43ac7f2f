"""Shared fixtures: synthetic disagreement records and scripted policies."""

import math

import numpy as np

from prefcontrast.disagree import Disagreement, DisagreementSet, Trajectory
from prefcontrast.sim_env import EnvParams, initial_state, snapshot


def record(qa_sd, qb_sd, qa_o, qb_o, oa=None, ob=None, episode=0, step=0):
    token = snapshot(initial_state(EnvParams()))
    sd = np.array([15, 0, 0, 15, 0, 25, 0, 0, 15, 0], dtype=float)
    oa = sd + 1.0 if oa is None else np.asarray(oa, dtype=float)
    ob = sd - 1.0 if ob is None else np.asarray(ob, dtype=float)
    qa_sd, qb_sd = np.asarray(qa_sd, float), np.asarray(qb_sd, float)
    return Disagreement(
        sd_obs=sd, sd_token=token, a_A=int(np.argmax(qa_sd)), a_B=(int(np.argmax(qa_sd)) + 1) % 5,
        traj_A=Trajectory(np.stack([sd, oa]), np.array([0, 4])),
        traj_B=Trajectory(np.stack([sd, ob]), np.array([1, 4])),
        oA_token=token, oB_token=token,
        qA_sd=qa_sd, qB_sd=qb_sd, qA_oA=np.asarray(qa_o, float), qB_oB=np.asarray(qb_o, float),
        episode=episode, step=step,
    )


def random_set(n, seed=0, spread=6.0):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        base = rng.normal(0, spread, 5)
        qa = base + rng.normal(0, 1, 5)
        qb = base * rng.uniform(0.5, 1.5) + rng.normal(0, 1, 5)
        recs.append(record(qa, qb, qa + rng.normal(0, 2, 5), qb + rng.normal(0, 2, 5),
                           oa=rng.normal(15, 5, 10), ob=rng.normal(15, 5, 10), episode=i))
    return DisagreementSet(recs, {"policy_a": "A", "policy_b": "B", "n": n, "k": 1})


def brute_force_preference(ds, alpha, beta, gamma):
    """Direct evaluation of the three conditions in plain Python."""

    def softmax_max(q):
        exps = [math.exp(v) for v in q]
        return max(exps) / sum(exps)

    lo_a = min(min(min(r.qA_sd), min(r.qA_oA)) for r in ds)
    hi_a = max(max(max(r.qA_sd), max(r.qA_oA)) for r in ds)
    lo_b = min(min(min(r.qB_sd), min(r.qB_oB)) for r in ds)
    hi_b = max(max(max(r.qB_sd), max(r.qB_oB)) for r in ds)

    def value(q, lo, hi):
        return 0.5 if hi == lo else (max(q) - lo) / (hi - lo)

    keep = []
    for i, r in enumerate(ds):
        imp = (softmax_max(r.qA_sd) + softmax_max(r.qB_sd)) / 2
        dv = abs(value(r.qA_sd, lo_a, hi_a) - value(r.qB_sd, lo_b, hi_b))
        dvo = abs(value(r.qA_oA, lo_a, hi_a) - value(r.qB_oB, lo_b, hi_b))
        if imp > alpha and dv < beta and dvo < gamma:
            keep.append(i)
    return keep


class TablePolicy:
    """Greedy policy returning fixed Q vectors keyed by a rule on the observation."""

    def __init__(self, rule, name="table"):
        self.rule = rule
        self.name = name

    def q_values(self, obs):
        q = np.zeros(5)
        q[self.rule(np.asarray(obs))] = 1.0
        return q
