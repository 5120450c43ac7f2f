import json

import pytest
from click.testing import CliRunner

from prefcontrast.cli import main
from prefcontrast.config import write_config


@pytest.fixture
def workspace(tmp_path, tiny):
    cfg = tmp_path / "tiny.cfg"
    write_config({**tiny, "p_list": 4}, cfg)
    return tmp_path, cfg


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_help_lists_subcommands():
    out = invoke("--help").output
    for cmd in ("train", "collect", "filter", "explain", "evaluate", "behavior"):
        assert cmd in out


def test_pipeline_commands(workspace):
    tmp, cfg = workspace
    out = tmp / "run"
    res = invoke("train", "--config", cfg, "--profile", "fast", "--out", out,
                 "--policy", "A_p4", "--policy", "safe")
    assert res.exit_code == 0, res.output
    pa, pb = out / "policies" / "A_p4.pqf", out / "policies" / "safe.pqf"
    assert pa.exists() and pb.exists()

    sets = tmp / "d.npz"
    res = invoke("collect", "--policy-a", pa, "--policy-b", pb, "--episodes", 2, "--k", 3,
                 "--out", sets)
    assert res.exit_code == 0 and "disagreements" in res.output

    prefs = tmp / "p.npz"
    res = invoke("filter", "--in", sets, "--alpha", 0.21, "--beta", 1.5, "--gamma", 1.5, "--out", prefs)
    assert res.exit_code == 0 and "preference-based" in res.output

    csv_path = tmp / "f.csv"
    res = invoke("explain", "--in", prefs, "--out", csv_path)
    assert res.exit_code == 0
    assert res.output.startswith(("Policy A_p4", "No preference"))
    assert csv_path.exists() or res.output.startswith("No preference-based")

    res = invoke("behavior", "--policy", pa, "--episodes", 2)
    assert res.exit_code == 0
    assert res.output.splitlines()[0].startswith("avg_merge_y_distance")


def test_evaluate_writes_report(workspace):
    tmp, cfg = workspace
    out = tmp / "eval"
    res = invoke("evaluate", "--config", cfg, "--out", out)
    assert res.exit_code == 0, res.output
    assert (out / "scenario_counts.csv").exists() and (out / "timing.json").exists()
    timing = json.loads((out / "timing.json").read_text())
    assert timing["total_seconds"] > 0
    assert "safe" in res.output and "rand" in res.output


def test_errors_exit_cleanly(workspace):
    tmp, cfg = workspace
    bad = tmp / "bad.pqf"
    bad.write_bytes(b"garbage")
    res = CliRunner().invoke(main, ["behavior", "--policy", str(bad)])
    assert res.exit_code == 1 and "not a policy file" in res.output
    broken = tmp / "broken.cfg"
    broken.write_text("mystery_key = 1\n")
    res = CliRunner().invoke(main, ["evaluate", "--config", str(broken), "--out", str(tmp / "x")])
    assert res.exit_code == 1 and "unknown config keys" in res.output
    res = CliRunner().invoke(main, ["train", "--config", str(cfg), "--out", str(tmp / "y"),
                                    "--policy", "nobody"])
    assert res.exit_code != 0
