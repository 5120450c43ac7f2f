import csv
import json
import math

import numpy as np

from prefcontrast.explain import OutcomeSamples, explain_samples
from prefcontrast.harness import BehaviorStats, ScenarioReport, ScenarioRow
from prefcontrast.report import emit_report, load_report, report_to_dict


def sample_report():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(20, 10)), rng.normal(size=(20, 10))
    a[:, 3] -= 3.0
    b[:, 9] = np.round(b[:, 9] * 4) / 4
    a[:, 9] = b[:, 9] - 1.0
    expl = explain_samples(OutcomeSamples(a, b), name_a="safe", name_b="A_p1")
    rows = [ScenarioRow(1, "safe", "safe", "A_p1", 40, 12, expl),
            ScenarioRow(1, "B", "A_p1", "B_p1", 0, 0),
            ScenarioRow(1, "rand", "A_p1", "rand_p1", skipped=True, note="missing policy")]
    behavior = {"safe": BehaviorStats(-4.5, 13.0, 90, 5, 5),
                "A_p1": BehaviorStats(math.nan, 19.0, 0, 100, 0)}
    return ScenarioReport(rows, behavior, {"env": {"v_init": 15.0}, "profile": "fast"})


def test_json_round_trip_keeps_nonfinite_values(tmp_path):
    report = sample_report()
    emit_report(report, tmp_path, formats=("json",))
    back = load_report(tmp_path / "report.json")
    assert math.isnan(back.behavior["A_p1"].avg_merge_y_distance)
    assert back.behavior["safe"] == report.behavior["safe"]
    orig, again = report.rows[0].explanation, back.rows[0].explanation
    assert again.text == orig.text
    assert again.findings[9].t == -math.inf and again.findings[9].p == 0.0
    assert [r.skipped for r in back.rows] == [False, False, True]
    assert report_to_dict(back) == report_to_dict(report)


def test_json_is_strict(tmp_path):
    emit_report(sample_report(), tmp_path, formats=("json",))
    text = (tmp_path / "report.json").read_text()
    assert "NaN" not in text and "Infinity" not in text
    json.loads(text, parse_constant=lambda c: (_ for _ in ()).throw(ValueError(c)))


def test_all_formats(tmp_path):
    paths = emit_report(sample_report(), tmp_path)
    names = {p.name for p in paths}
    assert {"scenario_counts.csv", "report.json", "merge_ydistance.png", "avg_velocity.png",
            "explanations.txt", "p1_safe.csv"} <= names
    for p in paths:
        assert p.exists() and p.stat().st_size > 0
    assert (tmp_path / "merge_ydistance.png").read_bytes()[:4] == b"\x89PNG"
    rows = list(csv.DictReader((tmp_path / "scenario_counts.csv").open()))
    assert [r["total_disagreements"] for r in rows] == ["40", "0", "0"]
    assert rows[0]["explanation"].startswith("Policy safe prefers states with")
    text = (tmp_path / "explanations.txt").read_text()
    assert "skipped: missing policy" in text and "no explanation" in text
    ydist = list(csv.DictReader((tmp_path / "merge_ydistance.csv").open()))
    assert ydist[1] == {"policy": "A_p1", "avg_merge_y_distance": "nan", "merged": "0", "not_merged": "100"}


def test_format_selection(tmp_path):
    paths = emit_report(sample_report(), tmp_path, formats=("text",))
    assert [p.name for p in paths] == ["explanations.txt"]
