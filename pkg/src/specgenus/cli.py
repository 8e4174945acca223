from __future__ import annotations

import os
import pdb
import sys
import traceback

import click
import click_spinner
import numpy as np
from click_option_group import optgroup

from . import pipeline
from .common import configure_logging, get_default_handlers, get_handlers, write_json
from .config import ConfigManager, load_config, parse_scalar
from .errors import EXIT_AMBIGUOUS, EXIT_UNEXPECTED, SpecGenusError


def _handle_unhandled_exception(error, show_traceback, usepdb):
    if show_traceback or usepdb:
        click.echo(traceback.format_exc(), err=True)
        if usepdb:
            pdb.post_mortem(error.__traceback__)
    else:
        click.echo(f"Top level exception: {error=}", err=True)


def _write_error(out, record):
    if not out:
        return
    try:
        os.makedirs(out, exist_ok=True)
        write_json(os.path.join(out, "error.json"), record)
    except OSError as error:
        click.echo(f"Cannot write error record to {out}: {error}", err=True)


def _run(ctx, out, action):
    """Run ``action`` and turn failures into an error record and an exit code."""
    try:
        with click_spinner.spinner(disable=ctx.obj.get("no_spinner")):
            return action()
    except SpecGenusError as error:
        _write_error(out, error.as_record())
        click.echo(f"Error ({error.code}): {error.message}", err=True)
        if ctx.obj.get("show_traceback") or ctx.obj.get("usepdb"):
            _handle_unhandled_exception(error, True, ctx.obj.get("usepdb"))
        sys.exit(error.exit_code)
    except Exception as error:
        _write_error(out, {"code": "unexpected", "message": str(error), "exit_code": EXIT_UNEXPECTED})
        _handle_unhandled_exception(error, ctx.obj.get("show_traceback"), ctx.obj.get("usepdb"))
        sys.exit(EXIT_UNEXPECTED)


def _config_options(function):
    function = click.option("--seed", type=click.IntRange(min=0), help="Random seed, overrides the config.")(function)
    function = click.option(
        "--out",
        type=click.Path(file_okay=False),
        help="Output directory, overrides the config.",
    )(function)
    function = click.option(
        "--config",
        "config_path",
        type=click.Path(dir_okay=False),
        required=True,
        help="Run configuration (JSON or YAML).",
    )(function)
    return function


def _load(ctx, config_path, out, seed):
    return _run(ctx, out, lambda: load_config(config_path, output=out, seed=seed))


@click.group()
@optgroup.group("Development")
@optgroup.option(
    "--log-handler",
    type=click.Choice(get_handlers()),
    default=get_default_handlers(),
    show_default=True,
    help="Select the logging handler.",
)
@optgroup.option(
    "--no-spinner",
    is_flag=True,
    default=False,
    help="Do not display a spinner while computing.",
)
@optgroup.option(
    "--pdb",
    "usepdb",
    is_flag=True,
    default=False,
    help="Drop to post mortem python debugger on unhandled top level exception.",
)
@optgroup.option(
    "--show-traceback",
    is_flag=True,
    default=False,
    help=("Display traceback if top level exception was not handled. " "Implied when --pdb is used."),
)
@click.pass_context
def main(ctx, log_handler, no_spinner, usepdb, show_traceback):
    """Recover the genus of a surface from semiclassical spectra."""
    configure_logging(log_handler)
    ctx.ensure_object(dict)
    ctx.obj = {
        "no_spinner": no_spinner,
        "usepdb": usepdb,
        "show_traceback": show_traceback,
    }


@main.command()
@_config_options
@click.pass_context
def analyze(ctx, config_path, out, seed):
    """Spectral genus of the configured surface, checked against the oracle."""
    config = _load(ctx, config_path, out, seed)
    report, exit_code = _run(ctx, config.output, lambda: pipeline.cmd_analyze(config))
    spectral = report["spectral"]
    click.echo(
        f"Spectral counts {tuple(spectral['counts'])}, chi={spectral['chi']}, genus={spectral['genus']}; "
        f"oracle genus={report['oracle']['genus']}; agreement={report['agreement']['verdict']}"
    )
    click.echo(f"Report written to {os.path.join(config.output, 'report.json')}")
    sys.exit(exit_code)


@main.command(name="oracle")
@_config_options
@click.pass_context
def oracle_command(ctx, config_path, out, seed):
    """Critical points, Morse counts and genus by direct computation."""
    config = _load(ctx, config_path, out, seed)
    report = _run(ctx, config.output, lambda: pipeline.cmd_oracle(config))
    click.echo(f"Counts {report.counts}, chi={report.chi}, genus={report.genus}, is_morse={report.is_morse}")
    for critical_set in report.sets:
        click.echo(f"  {critical_set.kind} set at E={critical_set.value:.6g} ({len(critical_set.positions)} points)")


@main.command(name="sweep")
@_config_options
@click.pass_context
def sweep_command(ctx, config_path, out, seed):
    """Trace values over the energy grid and the h list, to sweep.csv."""
    config = _load(ctx, config_path, out, seed)
    result = _run(ctx, config.output, lambda: pipeline.cmd_sweep(config))
    click.echo(f"Swept {len(result.energies)} energies at h={result.h_values}")


@main.command(name="spectrum")
@_config_options
@click.option("--h", "h_values", type=click.FloatRange(min=0.0, min_open=True), multiple=True, help="Values of h.")
@click.option("--lower", type=float, help="Lower end of the eigenvalue window.")
@click.option("--upper", type=float, help="Upper end of the eigenvalue window.")
@click.pass_context
def spectrum_command(ctx, config_path, out, seed, h_values, lower, upper):
    """Eigenvalues in a window, one spectrum_h<h>.csv per h."""
    config = _load(ctx, config_path, out, seed)
    if (lower is None) != (upper is None):
        raise click.UsageError("--lower and --upper go together")
    interval = None if lower is None else (lower, upper)
    windows = _run(ctx, config.output, lambda: pipeline.cmd_spectrum(config, list(h_values) or None, interval))
    for window in windows:
        status = "complete" if window.complete else "INCOMPLETE"
        click.echo(f"h={window.h:g}: {len(window.eigenvalues)} eigenvalues in {window.interval} ({status})")


@main.command(name="classify")
@click.argument("samples", type=click.Path(exists=True, dir_okay=False))
@click.option("--circle", is_flag=True, default=False, help="Fit the circle models instead of the point models.")
@click.option("--ambiguity-gap", type=click.FloatRange(0.0, 1.0), default=0.10, show_default=True)
@click.option("--max-log-residual", type=click.FloatRange(min=0.0, min_open=True), default=0.25, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), help="Directory for classification.json.")
@click.pass_context
def classify_command(ctx, samples, circle, ambiguity_gap, max_log_residual, out):
    """Signature model for a CSV of (t0, D) density samples."""
    model = _run(ctx, out, lambda: pipeline.cmd_classify(samples, circle, ambiguity_gap, max_log_residual, out))
    if circle:
        click.echo(f"{model.kind}: omega={model.omega:.6g} residual={model.residual:.3g}")
    else:
        click.echo(
            f"r={model.r} kinds={'/'.join(model.kinds)} omega=({model.alpha1:.6g}, {model.alpha2:.6g}) "
            f"residual={model.residual:.3g}"
        )
    if model.ambiguous:
        click.echo("Classification is ambiguous.", err=True)
        sys.exit(EXIT_AMBIGUOUS)


@main.command(name="mktest")
@click.option("--t0", type=float, required=True)
@click.option("--delta", type=float, required=True)
@click.option("--T", "T", type=float, required=True)
@click.option("--s-min", type=float, default=0.0, show_default=True)
@click.option("--s-max", type=float, default=10.0, show_default=True)
@click.option("--s-count", type=click.IntRange(min=2), default=101, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
@click.pass_context
def mktest(ctx, t0, delta, T, s_min, s_max, s_count, out):
    """Sample the test function phi on an s grid, to phi.csv."""
    s_grid = np.linspace(s_min, s_max, s_count)
    path = _run(ctx, out, lambda: pipeline.cmd_mktest(t0, delta, T, s_grid, out))
    click.echo(f"Wrote {path}")


@main.group(name="config")
def config_group():
    """Config operations."""


@config_group.command(name="set")
@click.option("--parent", "parents", multiple=True)
@click.argument("key")
@click.argument("value")
def config_set(parents, key, value):
    """Set a key-value in the configuration file."""
    with ConfigManager() as config_manager:
        section = config_manager

        for parent in parents:
            section = section.setdefault(parent, {})

        section[key] = parse_scalar(value)


if __name__ == "__main__":
    sys.exit(main())
