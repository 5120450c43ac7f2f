"""Split disagreements into preference-based and ability-based ones."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .disagree import (DisagreementSet, check_provenance, read_columns, records_from_columns,
                       set_columns, write_columns)

SCHEMA = "preference-set/1"


@dataclass(frozen=True)
class FilterThresholds:
    alpha: float = 0.8
    beta: float = 0.1
    gamma: float = 0.1

    def __post_init__(self):
        if not 0.2 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0.2, 1], got {self.alpha}")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")


@dataclass(frozen=True)
class QNormalizer:
    lo: float
    hi: float

    @property
    def degenerate(self) -> bool:
        return not self.hi > self.lo

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if self.degenerate:
            return np.full_like(q, 0.5)
        return (q - self.lo) / (self.hi - self.lo)


@dataclass(frozen=True)
class Diagnostics:
    importance: float
    dv_state: float
    dv_outcome: float


@dataclass
class PreferenceSet(DisagreementSet):
    diagnostics: list = field(default_factory=list)
    thresholds: FilterThresholds = field(default_factory=FilterThresholds)
    norm_a: QNormalizer | None = None
    norm_b: QNormalizer | None = None


def max_softmax(q) -> float:
    q = np.asarray(q, dtype=np.float64)
    return float(1.0 / np.sum(np.exp(q - np.max(q))))


def state_importance(q_a, q_b) -> float:
    """Mean confidence of the two policies, from softmax over raw Q values."""
    return 0.5 * (max_softmax(q_a) + max_softmax(q_b))


def fit_normalizer(ds: DisagreementSet, side: str) -> QNormalizer:
    """Global min/max of one policy's cached Q values across the whole set."""
    if len(ds) == 0:
        raise ValueError("cannot fit a normalizer on an empty set")
    if side == "A":
        qs = [np.concatenate([d.qA_sd, d.qA_oA]) for d in ds]
    elif side == "B":
        qs = [np.concatenate([d.qB_sd, d.qB_oB]) for d in ds]
    else:
        raise ValueError(f"side must be 'A' or 'B', got {side!r}")
    allq = np.concatenate(qs)
    return QNormalizer(float(allq.min()), float(allq.max()))


def value_estimate(q, norm: QNormalizer) -> float:
    return float(np.max(norm(q)))


def is_preference_based(d, norm_a: QNormalizer, norm_b: QNormalizer,
                        t: FilterThresholds) -> tuple[bool, Diagnostics]:
    importance = state_importance(d.qA_sd, d.qB_sd)
    dv_state = abs(value_estimate(d.qA_sd, norm_a) - value_estimate(d.qB_sd, norm_b))
    dv_outcome = abs(value_estimate(d.qA_oA, norm_a) - value_estimate(d.qB_oB, norm_b))
    ok = importance > t.alpha and dv_state < t.beta and dv_outcome < t.gamma
    return ok, Diagnostics(importance, dv_state, dv_outcome)


def filter_set(ds: DisagreementSet, t: FilterThresholds = FilterThresholds()) -> PreferenceSet:
    """Keep the preference-based disagreements, in their original order.

    A :class:`PreferenceSet` passed back in is filtered with the normalizers it
    was produced with, so re-filtering at the same thresholds is a no-op.
    """
    if len(ds) == 0:
        raise ValueError("cannot filter an empty disagreement set")
    if isinstance(ds, PreferenceSet) and ds.norm_a is not None:
        norm_a, norm_b = ds.norm_a, ds.norm_b
    else:
        norm_a, norm_b = fit_normalizer(ds, "A"), fit_normalizer(ds, "B")
    kept, diags = [], []
    for d in ds:
        ok, diag = is_preference_based(d, norm_a, norm_b, t)
        if ok:
            kept.append(d)
            diags.append(diag)
    prov = dict(ds.provenance)
    prov.setdefault("total_disagreements", len(ds))
    return PreferenceSet(kept, prov, diags, t, norm_a, norm_b)


def diagnose_all(ds: DisagreementSet) -> list:
    """Diagnostics for every record under normalizers fit on ``ds``."""
    norm_a, norm_b = fit_normalizer(ds, "A"), fit_normalizer(ds, "B")
    return [is_preference_based(d, norm_a, norm_b, FilterThresholds())[1] for d in ds]


def save_preference_set(ps: PreferenceSet, path: str | Path) -> None:
    cols = set_columns(ps)
    cols["importance"] = np.array([g.importance for g in ps.diagnostics], dtype=np.float64)
    cols["dv_state"] = np.array([g.dv_state for g in ps.diagnostics], dtype=np.float64)
    cols["dv_outcome"] = np.array([g.dv_outcome for g in ps.diagnostics], dtype=np.float64)
    norms = {}
    for side, norm in (("A", ps.norm_a), ("B", ps.norm_b)):
        if norm is not None:
            norms[side] = [norm.lo, norm.hi]
    header = {
        "schema": SCHEMA,
        "provenance": ps.provenance,
        "count": len(ps),
        "columns": sorted(cols),
        "thresholds": {"alpha": ps.thresholds.alpha, "beta": ps.thresholds.beta,
                       "gamma": ps.thresholds.gamma},
        "normalizers": norms,
    }
    write_columns(path, header, cols)


def load_preference_set(path: str | Path, expect: dict | None = None) -> PreferenceSet:
    header, cols = read_columns(path, SCHEMA)
    check_provenance(header["provenance"], expect, path)
    diags = [Diagnostics(float(i), float(s), float(o))
             for i, s, o in zip(cols["importance"], cols["dv_state"], cols["dv_outcome"])]
    norms = header.get("normalizers", {})
    norm_a = QNormalizer(*norms["A"]) if "A" in norms else None
    norm_b = QNormalizer(*norms["B"]) if "B" in norms else None
    return PreferenceSet(records_from_columns(cols), header["provenance"], diags,
                         FilterThresholds(**header["thresholds"]), norm_a, norm_b)
