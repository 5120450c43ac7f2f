"""Command line interface."""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from . import disagree, explain, pref_filter
from .config import ConfigError
from .harness import ExperimentConfig, behavior_stats, run_experiment, train_suite
from .qpolicy import PolicyFormatError, load_policy
from .sim_env import EnvParams, MergeEnv


def _errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ConfigError, PolicyFormatError, disagree.SchemaError, disagree.ProvenanceMismatch,
                ValueError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc
    return wrapper


def _env(config: str | None) -> EnvParams:
    return EnvParams.from_file(config) if config else EnvParams()


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Compare driving policies and explain their preference-based differences."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="Flat key = value config.")
@click.option("--policy", "policies", multiple=True,
              help="Policy name (safe, A_p<p>, B_p<p>, rand_p<p>); repeatable. Default: all.")
@click.option("--seed", type=int, default=None, help="Master seed.")
@click.option("--profile", type=click.Choice(["fast", "full"]), default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@_errors
def train(config, policies, seed, profile, out):
    """Train the policy suite (or selected members of it)."""
    cfg = ExperimentConfig.from_file(config, profile, seed=seed, out_dir=out)
    suite = train_suite(cfg, names=list(policies) or None)
    for name in sorted(suite.registry):
        click.echo(f"{name}\t{Path(cfg.out_dir) / 'policies' / (name + '.pqf')}")
    if policies and set(policies) - set(suite.registry) - set(suite.failures):
        raise click.ClickException(f"unknown policy names: {sorted(set(policies) - set(suite.registry))}")
    for name, msg in suite.failures.items():
        click.echo(f"FAILED {name}: {msg}", err=True)
    if suite.failures:
        sys.exit(1)


@main.command()
@click.option("--policy-a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--policy-b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--episodes", type=int, default=1000, show_default=True)
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_errors
def collect(policy_a, policy_b, episodes, k, seed, config, out):
    """Collect disagreements between two saved policies."""
    qa, qb = load_policy(policy_a), load_policy(policy_b)
    ds = disagree.collect(MergeEnv(_env(config)), qa, qb, episodes, k, seed)
    disagree.save_set(ds, out)
    click.echo(f"{len(ds)} disagreements -> {out}")


@main.command(name="filter")
@click.option("--in", "inp", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float, default=0.8, show_default=True)
@click.option("--beta", type=float, default=0.1, show_default=True)
@click.option("--gamma", type=float, default=0.1, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_errors
def filter_cmd(inp, alpha, beta, gamma, out):
    """Keep only preference-based disagreements."""
    ds = disagree.load_set(inp)
    ps = pref_filter.filter_set(ds, pref_filter.FilterThresholds(alpha, beta, gamma))
    pref_filter.save_preference_set(ps, out)
    click.echo(f"{len(ps)}/{len(ds)} preference-based -> {out}")


@main.command(name="explain")
@click.option("--in", "inp", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--p-thres", type=float, default=0.05, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="CSV of per-feature test results.")
@_errors
def explain_cmd(inp, p_thres, out):
    """Explain a preference set produced by `filter`."""
    ps = pref_filter.load_preference_set(inp)
    if len(ps) == 0:
        click.echo("No preference-based disagreements; nothing to explain.")
        return
    prov = ps.provenance
    expl = explain.generate_explanation(ps, p_thres, prov.get("policy_a", "A"), prov.get("policy_b", "B"))
    if out:
        explain.write_findings_csv(expl, out)
    click.echo(expl.text)


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", type=click.Choice(["fast", "full"]), default="fast", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--save-sets", is_flag=True, help="Also write every disagreement/preference set.")
@_errors
def evaluate(config, profile, seed, out, save_sets):
    """Train everything and run the three evaluation scenarios."""
    cfg = ExperimentConfig.from_file(config, profile, seed=seed, out_dir=out)
    report, paths, timing = run_experiment(cfg, save_sets=save_sets)
    Path(cfg.out_dir, "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    click.echo(f"{'p':>3} {'scenario':<8} {'total':>6} {'pref':>6}")
    for r in report.rows:
        click.echo(f"{r.p:>3} {r.scenario:<8} {r.total:>6} {r.preference:>6}"
                   + ("  (skipped)" if r.skipped else ""))
    click.echo(f"wrote {len(paths)} files to {cfg.out_dir} in {timing['total_seconds']:.0f}s")


@main.command()
@click.option("--policy", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--episodes", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@_errors
def behavior(policy, episodes, seed, config):
    """Average merge y-distance and velocity of a saved policy."""
    stats = behavior_stats(load_policy(policy), _env(config), episodes, seed)
    click.echo(f"avg_merge_y_distance\t{stats.avg_merge_y_distance:.3f}")
    click.echo(f"avg_velocity\t{stats.avg_velocity:.3f}")
    click.echo(f"merged\t{stats.merged}\ncrashed\t{stats.crashed}\ntimed_out\t{stats.timed_out}")


if __name__ == "__main__":
    main()
