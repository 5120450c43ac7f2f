"""Write scenario reports: scenario count CSV, JSON, plot data, figures, text."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from . import explain
from .harness import BehaviorStats, ScenarioReport, ScenarioRow
from .plotting import bar_chart

FORMATS = ("csv", "json", "plots", "text")


def _num(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _num(obj)


def report_to_dict(report: ScenarioReport) -> dict:
    rows = []
    for r in report.rows:
        rows.append({
            "p": r.p, "scenario": r.scenario, "policy_a": r.policy_a, "policy_b": r.policy_b,
            "total": r.total, "preference": r.preference, "skipped": r.skipped, "note": r.note,
            "explanation": explain.explanation_record(r.explanation) if r.explanation else None,
        })
    behavior = {name: {"avg_merge_y_distance": b.avg_merge_y_distance, "avg_velocity": b.avg_velocity,
                       "merged": b.merged, "crashed": b.crashed, "timed_out": b.timed_out}
                for name, b in report.behavior.items()}
    return _clean({"rows": rows, "behavior": behavior, "config": report.config})


def _unnum(x):
    if x == "inf":
        return math.inf
    if x == "-inf":
        return -math.inf
    return math.nan if x is None else x


def _explanation_from(record: dict | None):
    if not record:
        return None
    findings = tuple(explain.FeatureFinding(f["feature"], _unnum(f["t"]), _unnum(f["p"]),
                                            _unnum(f["mean_A"]), _unnum(f["mean_B"]), f["significant"])
                     for f in record["features"])
    return explain.Explanation(findings, record["text"], record["policy_a"], record["policy_b"])


def load_report(path: str | Path) -> ScenarioReport:
    data = json.loads(Path(path).read_text())
    rows = [ScenarioRow(r["p"], r["scenario"], r["policy_a"], r["policy_b"], r["total"],
                        r["preference"], _explanation_from(r["explanation"]), r["skipped"], r["note"])
            for r in data["rows"]]
    behavior = {name: BehaviorStats(_unnum(b["avg_merge_y_distance"]), _unnum(b["avg_velocity"]),
                                    b["merged"], b["crashed"], b["timed_out"])
                for name, b in data["behavior"].items()}
    return ScenarioReport(rows, behavior, data["config"])


def emit_report(report: ScenarioReport, out_dir: str | Path, formats=FORMATS) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out / "scenario_counts.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "scenario", "policy_a", "policy_b", "total_disagreements",
                        "preference_disagreements", "skipped", "explanation"])
            for r in report.rows:
                w.writerow([r.p, r.scenario, r.policy_a, r.policy_b, r.total, r.preference,
                            int(r.skipped), r.explanation.text if r.explanation else ""])
        written.append(path)
        exp_dir = out / "explanations"
        for r in report.rows:
            if r.explanation:
                exp_dir.mkdir(exist_ok=True)
                path = exp_dir / f"p{r.p}_{r.scenario}.csv"
                explain.write_findings_csv(r.explanation, path)
                written.append(path)
    if "json" in formats:
        path = out / "report.json"
        path.write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")
        written.append(path)
    names = list(report.behavior)
    if "csv" in formats or "plots" in formats:
        ypath, vpath = out / "merge_ydistance.csv", out / "avg_velocity.csv"
        with open(ypath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "avg_merge_y_distance", "merged", "not_merged"])
            for n in names:
                b = report.behavior[n]
                w.writerow([n, repr(b.avg_merge_y_distance), b.merged, b.crashed + b.timed_out])
        with open(vpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "avg_velocity"])
            for n in names:
                w.writerow([n, repr(report.behavior[n].avg_velocity)])
        written += [ypath, vpath]
    if "plots" in formats and names:
        v_init = report.config.get("env", {}).get("v_init")
        written.append(bar_chart(names, [report.behavior[n].avg_merge_y_distance for n in names],
                                 out / "merge_ydistance.png", "y-distance at merge",
                                 title="Average y-distance"))
        written.append(bar_chart(names, [report.behavior[n].avg_velocity for n in names],
                                 out / "avg_velocity.png", "velocity", reference=v_init,
                                 title="Average velocity throughout episode"))
    if "text" in formats:
        path = out / "explanations.txt"
        lines = []
        for r in report.rows:
            head = f"p={r.p} {r.policy_a} vs {r.policy_b}: {r.preference}/{r.total} preference-based"
            if r.skipped:
                lines.append(f"{head} (skipped: {r.note})")
            elif r.explanation:
                lines.append(f"{head}\n  {r.explanation.text}")
            else:
                lines.append(f"{head}\n  no explanation (no preference-based disagreements)")
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    return written
