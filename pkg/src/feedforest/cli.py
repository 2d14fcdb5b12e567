"""Command-line entry points: build/score models, run sessions, serve HTTP."""
from __future__ import annotations

import json
import os

import click
import numpy as np
import yaml

from .data import (Dataset, SynthSpec, load_dataset, simulated_oracle,
                   synth_generator)
from .describe import build_cover_problem, export_description, solve_cover
from .experiment import ExperimentConfig, run_experiment
from .forest import build_forest, load_model, save_model
from .learner import LearnerConfig, batch_active_learn
from .stream import StreamConfig, StreamLog, stream_active_learn


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise click.ClickException("config file must hold a mapping")
    return data


def _merged(config_path, overrides: dict) -> dict:
    merged = _load_config(config_path)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _dataset_from(options: dict) -> Dataset:
    if options.get("data"):
        return load_dataset(options["data"],
                            options.get("label_column", "label"),
                            options.get("anomaly_classes", ["anomaly"]))
    synth = options.get("synth") or {}
    seed = synth.pop("seed", options.get("seed", 0)) if synth else \
        options.get("seed", 0)
    return synth_generator(SynthSpec(**synth), seed=seed)


def _anomaly_classes(value):
    if value is None:
        return None
    return [s.strip() for s in value.split(",") if s.strip()]


@click.group()
def main():
    """Feedback-tuned isolation-forest anomaly workbench."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--data", type=click.Path(exists=True))
@click.option("--label-column")
@click.option("--anomaly-classes", help="comma-separated class names")
@click.option("--n-trees", type=int)
@click.option("--subsample", type=int)
@click.option("--seed", type=int)
@click.option("--out", required=True, type=click.Path())
def build(config_path, data, label_column, anomaly_classes, n_trees,
          subsample, seed, out):
    """Build an isolation forest and save it as JSON."""
    opts = _merged(config_path, dict(
        data=data, label_column=label_column,
        anomaly_classes=_anomaly_classes(anomaly_classes),
        n_trees=n_trees, subsample=subsample, seed=seed))
    dataset = _dataset_from(opts)
    model = build_forest(dataset, opts.get("n_trees", 100),
                         opts.get("subsample", 256),
                         seed=opts.get("seed", 0))
    save_model(model, out)
    click.echo(f"saved model with {model.T} trees, {model.m} leaves to {out}")


@main.command()
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--dim", type=int, default=2, show_default=True)
@click.option("--anomaly-rate", type=float, default=0.03, show_default=True)
@click.option("--n-clusters", type=int, default=2, show_default=True)
@click.option("--n-anomaly-classes", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def synth(n, dim, anomaly_rate, n_clusters, n_anomaly_classes, seed, out):
    """Generate a labeled synthetic dataset as CSV."""
    ds = synth_generator(SynthSpec(n=n, dim=dim, anomaly_rate=anomaly_rate,
                                   n_clusters=n_clusters,
                                   n_anomaly_classes=n_anomaly_classes),
                         seed=seed)
    with open(out, "w", newline="") as f:
        f.write(",".join(f"f{d}" for d in range(dim)) + ",label\n")
        for x, tag in zip(ds.points, ds.class_tags):
            f.write(",".join(repr(float(v)) for v in x) + f",{tag}\n")
    click.echo(f"wrote {ds.n} rows ({ds.n_anomalies} anomalies) to {out}")


@main.command("batch-al")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--data", type=click.Path(exists=True))
@click.option("--label-column")
@click.option("--anomaly-classes")
@click.option("--budget", type=int)
@click.option("--batch", type=int)
@click.option("--strategy", type=click.Choice(["top", "diverse"]))
@click.option("--n-trees", type=int)
@click.option("--subsample", type=int)
@click.option("--seed", type=int)
@click.option("--out", required=True, type=click.Path())
def batch_al(config_path, data, label_column, anomaly_classes, budget, batch,
             strategy, n_trees, subsample, seed, out):
    """Run the batch query loop against the simulated analyst."""
    opts = _merged(config_path, dict(
        data=data, label_column=label_column,
        anomaly_classes=_anomaly_classes(anomaly_classes), budget=budget,
        batch=batch, strategy=strategy, n_trees=n_trees,
        subsample=subsample, seed=seed))
    dataset = _dataset_from(opts)
    model = build_forest(dataset, opts.get("n_trees", 100),
                         opts.get("subsample", 256),
                         seed=opts.get("seed", 0))
    lconf = LearnerConfig(**opts.get("learner", {}))
    log = batch_active_learn(model, dataset, simulated_oracle(dataset),
                             opts.get("budget", 60), lconf,
                             strategy=opts.get("strategy", "top"),
                             batch=opts.get("batch", 1),
                             seed=opts.get("seed", 0))
    log.to_csv(out)
    click.echo(f"{len(log.records)} queries, "
               f"{log.cum_anomalies()} anomalies found; log at {out}")


@main.command("stream-al")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--data", type=click.Path(exists=True))
@click.option("--label-column")
@click.option("--anomaly-classes")
@click.option("--window-size", type=int)
@click.option("--queries-per-window", type=int)
@click.option("--budget", type=int)
@click.option("--update-mode",
              type=click.Choice(["none", "replace-fraction", "kl-adaptive"]))
@click.option("--n-trees", type=int)
@click.option("--subsample", type=int)
@click.option("--seed", type=int)
@click.option("--out", required=True, type=click.Path())
@click.option("--drift-out", type=click.Path())
def stream_al(config_path, data, label_column, anomaly_classes, window_size,
              queries_per_window, budget, update_mode, n_trees, subsample,
              seed, out, drift_out):
    """Run the streaming loop over a dataset chunked into windows."""
    opts = _merged(config_path, dict(
        data=data, label_column=label_column,
        anomaly_classes=_anomaly_classes(anomaly_classes),
        window_size=window_size, queries_per_window=queries_per_window,
        budget=budget, update_mode=update_mode, n_trees=n_trees,
        subsample=subsample, seed=seed))
    dataset = _dataset_from(opts)
    sconf = StreamConfig(
        window_size=opts.get("window_size", 512),
        queries_per_window=opts.get("queries_per_window", 20),
        total_budget=opts.get("budget", 60),
        update_mode=opts.get("update_mode", "kl-adaptive"),
        n_trees=opts.get("n_trees", 100),
        subsample=opts.get("subsample", 256),
        **opts.get("stream", {}))
    K = sconf.window_size
    windows = [Dataset(dataset.points[i:i + K],
                       dataset.hidden_labels[i:i + K],
                       dataset.class_tags[i:i + K]
                       if dataset.class_tags else None)
               for i in range(0, dataset.n, K)]
    lconf = LearnerConfig(**opts.get("learner", {}))
    result = stream_active_learn(windows, sconf,
                                 simulated_oracle(dataset), lconf,
                                 seed=opts.get("seed", 0))
    result.session.to_csv(out)
    if drift_out:
        result.drift_report_csv(drift_out)
    replaced = sum(r.n_replaced for r in result.drift_report)
    click.echo(f"{len(result.session.records)} queries over "
               f"{len(windows)} windows, "
               f"{result.session.cum_anomalies()} anomalies, "
               f"{replaced} trees replaced; log at {out}")


@main.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--label-column", default="label", show_default=True)
@click.option("--anomaly-classes", default="anomaly", show_default=True)
@click.option("--ids", required=True,
              help="comma-separated instance ids to describe")
@click.option("--delta", type=int, default=5, show_default=True)
def describe(model_path, data, label_column, anomaly_classes, ids, delta):
    """Print a compact subspace description of the given instances."""
    model = load_model(model_path)
    dataset = load_dataset(data, label_column,
                           _anomaly_classes(anomaly_classes))
    id_list = [int(s) for s in ids.split(",") if s.strip()]
    bad = [i for i in id_list if not 0 <= i < dataset.n]
    if bad:
        raise click.ClickException(f"unknown instance ids {bad}")
    problem = build_cover_problem(model, dataset.points[id_list], delta,
                                  instance_ids=id_list)
    desc = solve_cover(problem)
    click.echo(export_description(model, problem, desc))


@main.command("eval")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--output-dir", type=click.Path())
def eval_cmd(config_path, output_dir):
    """Run a full experiment (arms x seeds) from a YAML config."""
    opts = _load_config(config_path)
    if output_dir:
        opts["output_dir"] = output_dir
    config = ExperimentConfig(**opts)
    results = run_experiment(config)
    manifest = os.path.join(config.output_dir, "manifest.json")
    for arm, series in results.items():
        click.echo(f"{arm}: mean anomalies at B={len(series.y_mean)}: "
                   f"{series.y_mean[-1]:.2f} +/- {series.y_ci95[-1]:.2f}")
    click.echo(f"manifest at {manifest}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--output-dir", default="sessions", show_default=True)
def serve(host, port, output_dir):
    """Start the HTTP session service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(output_dir=output_dir), host=host, port=port)


if __name__ == "__main__":
    main()
