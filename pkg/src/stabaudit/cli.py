"""Command-line interface.

Subcommands map onto pipeline stages so failures localize: ingest, train,
rashomon, churn, analyze, bounds-check, report, and run (everything).
Progress goes to stderr; data and file paths go to stdout. Exit code is
nonzero iff a hard error occurred or any exact-arithmetic bound check
failed.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .config import ExperimentConfig, validate_config
from .errors import StabauditError
from .metrics import PredictionMatrix, churn
from .models import load_model
from .pipeline import (
    RunPaths,
    StabilityReport,
    emit_plot_data,
    load_ingested,
    plan_jobs,
    run_experiment,
    stage_analyze,
    stage_ingest,
    stage_rashomon,
    stage_train,
)
from .rashomon import CandidateGridConfig, constrained_candidates, most_contestable_indices

EXIT_BOUND_VIOLATION = 3

log = logging.getLogger("stabaudit")


def _load(config_path: str, out: str | None, jobs: int | None,
          seed_override: int | None) -> tuple[ExperimentConfig, RunPaths]:
    config, warnings_ = validate_config(config_path)
    for w in warnings_:
        click.echo(f"warning: {w}", err=True)
    if out:
        config.output_dir = out
    if jobs:
        config.jobs = jobs
    if seed_override is not None:
        config.seed_arrays = ((int(seed_override),),)
    return config, RunPaths(Path(config.output_dir))


def _exit_on_violations(report: StabilityReport) -> None:
    summary = report.doc.get("bounds_summary", {})
    if not summary.get("all_satisfied", True):
        click.echo(
            f"error: {summary['n_violations']} bound check(s) violated", err=True
        )
        sys.exit(EXIT_BOUND_VIOLATION)


config_opt = click.option("--config", "-c", "config_path", required=True,
                          type=click.Path(exists=True), help="TOML or JSON config.")
out_opt = click.option("--out", type=click.Path(), default=None,
                       help="Output directory (overrides config).")
jobs_opt = click.option("--jobs", type=int, default=None,
                        help="Worker threads for independent trainings.")
seed_opt = click.option("--seed-override", type=int, default=None,
                        help="Run a single repetition with this base seed.")


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("synth-data")
@click.option("--kind", type=click.Choice(["census", "credit"]), default="census")
@click.option("--out", type=click.Path(), required=True)
@click.option("--n", type=int, default=None)
@click.option("--seed", type=int, default=7)
def synth_data(kind: str, out: str, n: int | None, seed: int):
    """Write a synthetic benchmark-shaped CSV."""
    from . import synth

    if kind == "census":
        path = synth.write_census_like_csv(out, n=n or 16256, seed=seed)
    else:
        path = synth.write_credit_like_csv(out, n=n or 30000, seed=seed)
    click.echo(str(path))


@main.command()
@config_opt
def validate(config_path: str):
    """Validate a config and echo the fully defaulted form."""
    config, warnings_ = validate_config(config_path)
    for w in warnings_:
        click.echo(f"warning: {w}", err=True)
    click.echo(json.dumps(config.resolved_dict(), sort_keys=True, indent=1))


@main.command()
@config_opt
@out_opt
def ingest(config_path: str, out: str | None):
    """Featurize the dataset and cache it with the split."""
    config, paths = _load(config_path, out, None, None)
    data, split, calib = stage_ingest(config, paths)
    click.echo(json.dumps({
        "n": data.n, "d": data.d,
        "positive_rate": float(data.y.mean()),
        "n_train": int(split.train_indices.size - calib.size),
        "n_test": int(split.test_indices.size),
        "n_calibration": int(calib.size),
        "preprocessing_hash": data.provenance["preprocessing_hash"],
        "dataset_cache": str(paths.dataset),
    }, indent=1))


@main.command()
@config_opt
@out_opt
@jobs_opt
@seed_opt
def train(config_path: str, out: str | None, jobs: int | None, seed_override):
    """Train model B and the per-regime model A for every class and rep."""
    config, paths = _load(config_path, out, jobs, seed_override)
    stage_train(config, paths)
    click.echo(str(paths.root / "reps"))


@main.command()
@config_opt
@out_opt
@jobs_opt
@seed_opt
@click.option("--mode", type=click.Choice(["randomized", "candidates"]),
              default="randomized")
@click.option("--n-targets", type=int, default=50,
              help="Candidate mode: how many near-boundary test points to target.")
def rashomon(config_path: str, out: str | None, jobs: int | None, seed_override,
             mode: str, n_targets: int):
    """Build Rashomon sets (randomized retraining or constrained candidates)."""
    config, paths = _load(config_path, out, jobs, seed_override)
    if mode == "randomized":
        stage_rashomon(config, paths)
        click.echo(str(paths.root / "reps"))
        return

    # constrained candidates around the first enabled plain logistic class
    data, split, calib, model_train = load_ingested(paths)
    spec = next(
        (s for s in config.model_classes.values()
         if s.enabled and s.head is None and s.train.arch == "logreg"),
        None,
    )
    if spec is None:
        raise click.ClickException(
            "candidates mode needs an enabled plain logistic class"
        )
    baseline_path = paths.class_dir(0, spec.name) / "b.json"
    if not baseline_path.exists():
        raise click.ClickException("train stage must run before candidates mode")
    baseline = load_model(baseline_path)
    targets = most_contestable_indices(
        baseline, data, split.test_indices, n_targets
    )
    grid = CandidateGridConfig(
        thresholds=tuple(np.round(np.arange(0.05, 0.96, 0.10), 2)),
        target_examples=tuple(int(i) for i in targets),
    )
    rset = constrained_candidates(
        data, model_train, baseline, grid, config.rashomon.epsilon
    )
    out_dir = paths.class_dir(0, spec.name) / "rashomon_candidates"
    rset.save(out_dir)
    infeasible = sum(1 for r in rset.candidate_records if not r.feasible)
    click.echo(json.dumps({
        "accepted": rset.size,
        "rejected": len(rset.rejected),
        "infeasible": infeasible,
        "total_candidates": len(rset.candidate_records),
        "out": str(out_dir),
    }, indent=1))


@main.command()
@config_opt
@out_opt
def churn_cmd(config_path: str, out: str | None):
    """Print per-regime churn from cached predictions."""
    config, paths = _load(config_path, out, None, None)
    data, split, calib, model_train = load_ingested(paths)
    rows = []
    for rep in range(len(config.seed_arrays)):
        for spec in config.model_classes.values():
            if not spec.enabled:
                continue
            scores_path = paths.class_dir(rep, spec.name) / "scores.csv"
            if not scores_path.exists():
                raise click.ClickException(
                    f"missing {scores_path}; run the rashomon stage first"
                )
            pm = PredictionMatrix.load_csv(scores_path)
            for regime in config.regimes:
                value = churn(
                    pm.labels[pm.row(f"a_{regime.name}")], pm.labels[pm.row("b")]
                )
                rows.append({
                    "rep": rep, "class": spec.name, "regime": regime.name,
                    "churn": value,
                })
    click.echo(json.dumps(rows, indent=1))


@main.command()
@config_opt
@out_opt
def analyze(config_path: str, out: str | None):
    """Compute all metrics and bounds from cached predictions; write report."""
    config, paths = _load(config_path, out, None, None)
    report = stage_analyze(config, paths)
    report.save(paths.report)
    files = emit_plot_data(report, paths.plots)
    click.echo(json.dumps({
        "report": str(paths.report),
        "report_hash": report.content_hash(),
        "plot_files": [str(f) for f in files],
    }, indent=1))
    _exit_on_violations(report)


@main.command()
@config_opt
@out_opt
def report(config_path: str, out: str | None):
    """Regenerate the report from cached predictions (bit-identical)."""
    config, paths = _load(config_path, out, None, None)
    report_ = stage_analyze(config, paths)
    report_.save(paths.report)
    click.echo(report_.content_hash())
    _exit_on_violations(report_)


@main.command("bounds-check")
@config_opt
@out_opt
@click.option("--zero-churn-pairs", type=int, default=None,
              help="Run the zero-expected-churn Monte-Carlo with this many pairs.")
@click.option("--theorem-check/--no-theorem-check", default=None,
              help="Run the expected-smooth-churn consistency check.")
def bounds_check(config_path: str, out: str | None, zero_churn_pairs, theorem_check):
    """Run the bound suite standalone from cached artifacts."""
    import dataclasses

    config, paths = _load(config_path, out, None, None)
    if zero_churn_pairs is not None:
        config.bounds = dataclasses.replace(
            config.bounds, zero_churn_pairs=zero_churn_pairs
        )
    if theorem_check is not None:
        config.bounds = dataclasses.replace(
            config.bounds, theorem_check=theorem_check
        )
    report_ = stage_analyze(config, paths)
    click.echo(json.dumps({
        "bounds_summary": report_.doc["bounds_summary"],
        "extras": report_.doc["extras"],
    }, sort_keys=True, indent=1))
    _exit_on_violations(report_)


@main.command()
@config_opt
@out_opt
@jobs_opt
@seed_opt
@click.option("--dry-run", is_flag=True, help="List planned jobs; train nothing.")
@click.option("--stage", type=click.Choice(["ingest", "train", "rashomon", "analyze"]),
              default=None, help="Run a single stage against the cache.")
def run(config_path: str, out: str | None, jobs: int | None, seed_override,
        dry_run: bool, stage: str | None):
    """Run the full experiment pipeline (or one stage of it)."""
    config, paths = _load(config_path, out, jobs, seed_override)
    if dry_run:
        for line in plan_jobs(config):
            click.echo(line)
        return
    try:
        if stage == "ingest":
            stage_ingest(config, paths)
            click.echo(str(paths.dataset))
            return
        if stage == "train":
            stage_train(config, paths)
            click.echo(str(paths.root / "reps"))
            return
        if stage == "rashomon":
            stage_rashomon(config, paths)
            click.echo(str(paths.root / "reps"))
            return
        if stage == "analyze":
            report_ = stage_analyze(config, paths)
            report_.save(paths.report)
            emit_plot_data(report_, paths.plots)
            click.echo(str(paths.report))
            _exit_on_violations(report_)
            return
        report_ = run_experiment(config)
        click.echo(json.dumps({
            "report": str(paths.report),
            "report_hash": report_.content_hash(),
            "bounds_summary": report_.doc["bounds_summary"],
        }, indent=1))
        _exit_on_violations(report_)
    except StabauditError as e:
        raise click.ClickException(str(e)) from e


main.add_command(churn_cmd, name="churn")


if __name__ == "__main__":
    main()
