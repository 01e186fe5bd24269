"""``kernel-mor`` command line interface.

Exit codes: 0 success, 1 numerical failure, 2 configuration or usage error.
"""
from __future__ import annotations

import json
import sys

import click

from . import pipeline
from .balancing import read_hankel_values
from .config import load_config
from .errors import ConfigError, KernelMORError, MissingArtifactError, StaleArtifactError

EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


def _load(config, seed, out):
    cfg = load_config(config)
    if seed is not None:
        raw = dict(cfg.raw)
        raw["seed"] = seed
        from .config import parse_config

        cfg = parse_config(raw)
    return pipeline.Workspace(cfg, out)


def _guard(fn):
    try:
        fn()
    except (ConfigError, MissingArtifactError, StaleArtifactError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except KernelMORError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)


def common(f):
    f = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                     help="Seed for random input signals (overrides the config).")(f)
    f = click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                     help="Output directory (default: output_dir from the config).")(f)
    f = click.option("--config", "config", required=True,
                     help="Config file, or a bundled name: paper_7d, lti_linear_kernel.")(f)
    return f


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Balanced reduction of nonlinear control systems with kernel methods."""


@main.command()
@common
def simulate(config, out, seed):
    """Simulate the full-order system under the evaluation input."""
    def go():
        ws = _load(config, seed, out)
        pipeline.stage_simulate(ws)
        click.echo(f"wrote {ws.path('trajectory.csv')}")
    _guard(go)


@main.command()
@common
@click.option("--export", "export_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the dataset CSV to this path.")
@click.option("--import", "import_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Load the dataset from a CSV instead of simulating.")
def gramians(config, out, seed, export_path, import_path):
    """Collect impulse and initial-condition samples."""
    def go():
        ws = _load(config, seed, out)
        pipeline.stage_gramians(ws, import_path=import_path, export_path=export_path)
        click.echo(f"wrote {ws.path('gramian_dataset.csv')}")
    _guard(go)


@main.command()
@common
def balance(config, out, seed):
    """Balance the Gram matrices and print the Hankel values."""
    def go():
        ws = _load(config, seed, out)
        pipeline.stage_balance(ws)
        sigma = read_hankel_values(ws.path("hankel_values.csv"))
        with open(ws.path("balance.json")) as fh:
            summary = json.load(fh)
        ratios = summary["gap_ratios"] + [None]
        click.echo(f"{'k':>4}  {'sigma_k':>14}  {'sigma_k/sigma_k+1':>18}")
        for k, (s, r) in enumerate(zip(sigma, ratios), start=1):
            click.echo(f"{k:>4}  {s:>14.6e}  {'' if r is None else f'{r:18.4f}'}")
        click.echo(f"rank {summary['rank']}, retained q = {summary['q']}")
        for key in ("kernel_vs_moore_max_rel", "moore_vs_lyapunov_max_rel"):
            if key in summary:
                click.echo(f"{key}: {summary[key]:.3e}")
    _guard(go)


@main.command()
@common
def learn(config, out, seed):
    """Fit the reduced dynamics and output models with LOOCV."""
    def go():
        ws = _load(config, seed, out)
        pipeline.stage_learn(ws)
        with open(ws.path("learn.json")) as fh:
            click.echo(json.dumps(json.load(fh), sort_keys=True))
    _guard(go)


@main.command()
@common
def reduce(config, out, seed):
    """Assemble the closed reduced system."""
    def go():
        ws = _load(config, seed, out)
        pipeline.stage_reduce(ws)
        click.echo(f"wrote {ws.path('reduced.json')}")
    _guard(go)


@main.command()
@common
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON signal that replaces the configured evaluation input.")
def evaluate(config, out, seed, input_path):
    """Simulate full and reduced systems and compare outputs."""
    def go():
        ws = _load(config, seed, out)
        if input_path:
            with open(input_path) as fh:
                try:
                    sig = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigError("input", f"invalid JSON: {exc}") from None
            ws.cfg = ws.cfg.with_eval_signal(sig)
        pipeline.stage_evaluate(ws)
        _print_metrics(ws)
    _guard(go)


@main.command()
@common
def run(config, out, seed):
    """Run all stages end to end."""
    def go():
        ws = _load(config, seed, out)
        pipeline.run_pipeline(ws.cfg, ws.root)
        sigma = read_hankel_values(ws.path("hankel_values.csv"))
        click.echo("hankel values: " + " ".join(f"{s:.4e}" for s in sigma[: min(8, sigma.size)]))
        _print_metrics(ws)
    _guard(go)


def _print_metrics(ws):
    with open(ws.path("metrics.json")) as fh:
        m = json.load(fh)
    click.echo(f"rmse {m['rmse']:.6g}  relative_l2 {m['relative_l2']:.6g}  max_abs_err {m['max_abs_err']:.6g}")


if __name__ == "__main__":  # pragma: no cover
    main()
