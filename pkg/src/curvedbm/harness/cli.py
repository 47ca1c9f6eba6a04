"""Command line entry point.

    curvedbm <subcommand> [--model h2] [--perturbation none] [--T 1] [--dt 0.01]
             [--paths 1000] [--seed 0] [--out report.csv] [--format csv|json]
             [--workers 1] [--param key=value ...] [--config file.toml]
             [--figure fig.png] [--assert]

Exit codes: 0 pass (or no criterion), 1 usage, 2 numerical failure,
3 acceptance failure in --assert mode.
"""

from __future__ import annotations

import os
import sys
import time

import click

from .. import geometry as geo
from ..variation.flow import PicardDivergence
from . import plotting, report
from .config import SUBCOMMANDS, ConfigError, ExperimentConfig
from .runners import RUNNERS, run

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ACCEPT = 0, 1, 2, 3

NUMERICAL = (ArithmeticError, FloatingPointError, RuntimeError, geo.DomainError,
             PicardDivergence, NotImplementedError)

DEFAULTS = {
    "oracle": {},
    "riccati": {"horizon": 20.0},
    "drift": {"T": 50.0, "dt": 0.05, "paths": 2000},
    "entropy": {"T": 30.0, "dt": 0.05, "paths": 2000},
    "exit-angles": {"dt": 0.01, "paths": 2000},
    "bridge": {"T": 1.0, "dt": 1e-3, "paths": 2000},
    "girsanov-check": {"model": "euclidean", "T": 1.0, "dt": 0.01, "paths": 10_000},
    "great-terms": {"perturbation": "zero-mean:0.3,1.2,0.6,1.2,1.0"},
    "entropy-derivative": {"perturbation": "zero-mean:0.3,1.2,0.6,1.2,1.0"},
    "ibp-check": {"perturbation": "bump:0,1.5,2,1", "T": 2.0, "dt": 0.02, "paths": 100_000},
    "flow-fs": {"T": 1.0, "dt": 0.02, "paths": 10_000},
}


def _params(pairs):
    out = {}
    for p in pairs:
        k, sep, v = p.partition("=")
        if not sep or not k:
            raise click.UsageError(f"--param expects key=value, got {p!r}")
        out[k.strip()] = v.strip()
    return out


def build_config(subcommand, opts):
    base = dict(DEFAULTS.get(subcommand, {}))
    cli = {k: v for k, v in opts.items() if v is not None}
    params = _params(cli.pop("param", ()))
    cfg_file = cli.pop("config", None)
    if cfg_file:
        cfg = ExperimentConfig.from_toml(cfg_file, subcommand=subcommand)
        fields = {**cfg.echo(), **{k: v for k, v in cli.items()}}
        fields.pop("subcommand", None)
        extra = {k: getattr(cfg, k) for k in ("out", "format", "workers")}
        extra.update({k: cli[k] for k in ("out", "format", "workers") if k in cli})
        cfg = ExperimentConfig.from_echo({"subcommand": subcommand, **fields}, **extra)
        cfg.params.update(params)
        return cfg
    base.update(cli)
    return ExperimentConfig(subcommand=subcommand, params=params, **base)


def execute(cfg: ExperimentConfig, figure=None, check=False, echo_stdout=True):
    """Run, write the report (and figure), and return the exit code."""
    echo = cfg.echo()
    t0 = time.perf_counter()
    try:
        result = run(cfg)
    except ConfigError:
        raise
    except NUMERICAL as exc:
        text = report.error_record(echo, exc, cfg.format)
        if cfg.out:
            report.write(cfg.out, text)
        click.echo(f"numerical failure: {type(exc).__name__}: {exc}", err=True)
        return EXIT_NUMERIC
    runtime = time.perf_counter() - t0
    text = report.render(echo, result, cfg.format)
    if cfg.out:
        report.write(cfg.out, text)
        report.write_timing(cfg.out, runtime, cfg.workers, cfg.paths)
    elif echo_stdout:
        click.echo(text, nl=False)
    if figure is None and cfg.out and result.plot is not None:
        figure = os.path.splitext(cfg.out)[0] + ".png"
    if figure and result.plot is not None:
        plotting.render(result.plot, figure, cfg.subcommand)
    click.echo(f"{cfg.subcommand}: {result.status} ({runtime:.1f} s)", err=True)
    if check and result.passed is False:
        return EXIT_ACCEPT
    return EXIT_OK


def _common(fn):
    opts = [
        click.option("--model", type=click.Choice(["h2", "h3", "euclidean", "e2", "e3"])),
        click.option("--perturbation", type=str, help="none | bump:... | zero-mean:... | scaling:c"),
        click.option("--T", "T", type=float, help="time horizon"),
        click.option("--dt", type=float),
        click.option("--paths", type=int),
        click.option("--seed", type=int),
        click.option("--horizon", type=float, help="geodesic horizon for stable tensors"),
        click.option("--lam", type=float, help="lambda step for finite differences"),
        click.option("--s0", type=float, help="largest flow parameter"),
        click.option("--x0", type=str, help="start point, comma separated"),
        click.option("--out", type=click.Path(dir_okay=False)),
        click.option("--format", "format", type=click.Choice(["csv", "json"])),
        click.option("--workers", type=int),
        click.option("--param", multiple=True, help="extra key=value parameter"),
        click.option("--config", type=click.Path(exists=True, dir_okay=False), help="TOML file"),
        click.option("--figure", type=click.Path(dir_okay=False), help="PNG output"),
        click.option("--assert", "check", is_flag=True, help="exit 3 when a criterion fails"),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main():
    """Brownian motion, drift and entropy on hyperbolic space and its perturbations."""


def _make(name):
    @main.command(name=name, help=(RUNNERS[name].__doc__ or name).strip().splitlines()[0])
    @_common
    def cmd(figure, check, **opts):
        try:
            cfg = build_config(name, opts)
        except ConfigError as exc:
            raise click.UsageError(str(exc)) from None
        try:
            code = execute(cfg, figure, check)
        except ConfigError as exc:
            raise click.UsageError(str(exc)) from None
        sys.exit(code)

    return cmd


for _name in SUBCOMMANDS:
    _make(_name)


@main.command(name="rerun")
@click.argument("report_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False))
@click.option("--format", "format", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--workers", type=int, default=1)
def rerun(report_file, out, format, workers):
    """Rerun the experiment echoed in a report file."""
    try:
        cfg = ExperimentConfig.from_report(report_file, out=out, format=format, workers=workers)
    except (ConfigError, KeyError, ValueError, TypeError) as exc:
        raise click.UsageError(f"cannot rebuild config: {exc}") from None
    sys.exit(execute(cfg))


def entry(argv=None):
    """Console entry: usage errors exit 1 (click's default is 2)."""
    try:
        code = main.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    return int(code or 0)

