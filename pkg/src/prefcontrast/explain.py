"""Contrastive explanations from paired outcome features."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sim_env import FEATURE_NAMES
from .stats import paired_t_test


@dataclass(frozen=True)
class OutcomeSamples:
    a: np.ndarray  # (n, 10) outcome observations reached by policy A
    b: np.ndarray

    def feature(self, f: int | str) -> tuple[np.ndarray, np.ndarray]:
        i = FEATURE_NAMES.index(f) if isinstance(f, str) else f
        return self.a[:, i], self.b[:, i]

    def __len__(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class FeatureFinding:
    feature: str
    t: float
    p: float
    mean_a: float
    mean_b: float
    significant: bool

    @property
    def direction(self) -> str:
        return "larger" if self.mean_a > self.mean_b else "smaller"


@dataclass(frozen=True)
class Explanation:
    findings: tuple
    text: str
    name_a: str = "A"
    name_b: str = "B"

    @property
    def significant(self) -> list:
        return [f for f in self.findings if f.significant]

    def direction_of(self, feature: str) -> str | None:
        for f in self.significant:
            if f.feature == feature:
                return f.direction
        return None


def outcome_samples(ps) -> OutcomeSamples:
    if len(ps) == 0:
        raise ValueError("no preference-based disagreements to explain")
    return OutcomeSamples(np.array([d.o_A for d in ps]), np.array([d.o_B for d in ps]))


def render(findings, name_a: str = "A", name_b: str = "B") -> str:
    parts = [f"{f.feature} {f.direction}" for f in findings if f.significant]
    if not parts:
        return f"No preference difference was detected between policy {name_a} and policy {name_b}."
    return f"Policy {name_a} prefers states with {', '.join(parts)} compared to policy {name_b}."


def explain_samples(samples: OutcomeSamples, p_thres: float = 0.05,
                    name_a: str = "A", name_b: str = "B") -> Explanation:
    findings = []
    for i, name in enumerate(FEATURE_NAMES):
        a, b = samples.feature(i)
        res = paired_t_test(a, b)
        findings.append(FeatureFinding(name, res.t, res.p, float(np.mean(a)), float(np.mean(b)),
                                       bool(res.p < p_thres)))
    return Explanation(tuple(findings), render(findings, name_a, name_b), name_a, name_b)


def generate_explanation(ps, p_thres: float = 0.05, name_a: str = "A",
                         name_b: str = "B") -> Explanation:
    """Test every outcome feature and describe the significant differences.

    A feature enters the sentence iff its paired t-test p-value is below
    ``p_thres``; its direction compares the mean over policy A's outcomes with
    the mean over policy B's.
    """
    return explain_samples(outcome_samples(ps), p_thres, name_a, name_b)


def write_findings_csv(expl: Explanation, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "t", "p", "mean_A", "mean_B", "direction", "significant"])
        for f in expl.findings:
            w.writerow([f.feature, repr(f.t), repr(f.p), repr(f.mean_a), repr(f.mean_b),
                        f.direction, int(f.significant)])


def explanation_record(expl: Explanation) -> dict:
    return {
        "text": expl.text,
        "policy_a": expl.name_a,
        "policy_b": expl.name_b,
        "features": [
            {"feature": f.feature, "t": f.t, "p": f.p, "mean_A": f.mean_a, "mean_B": f.mean_b,
             "direction": f.direction, "significant": f.significant}
            for f in expl.findings
        ],
    }
