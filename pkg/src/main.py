#!/usr/bin/env python3
"""
Branched flow and superwire simulations
Main CLI entry point
"""

import click
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from colorama import Fore, Style

from core.runner import STATUS_OK, STATUS_PROPAGATION, ScenarioRunner, inputs_hash
from parsers.grid_file import GridFormatError, read_grid
from parsers.scenario import SCAN_KINDS, ScenarioError, ScenarioParser
from utils.helpers import (
    format_finding_for_console,
    format_metrics_table,
    load_config,
    load_rules_config,
)
from utils.logger import setup_logger
from utils.render import STYLES, render

EXIT_FINDINGS = 1
EXIT_PROPAGATION = 2
COMPONENTS = ("density", "abs", "real", "imag")


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
@click.option(
    "--config", "-c", type=click.Path(exists=True), help="Configuration file path"
)
@click.option("--log-file", type=click.Path(dir_okay=False), help="Also write DEBUG logs to this file")
@click.pass_context
def cli(ctx, verbose, config, log_file):
    """Branched flow, channel stability and superwire experiments"""
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose
    ctx.obj["config_path"] = config
    setup_logger(verbose, log_file)


def _echo_scenario_errors(error: ScenarioError) -> None:
    click.echo(f"❌ Invalid scenario ({len(error.errors)} problem(s)):", err=True)
    for message in error.errors:
        click.echo(f"   {message}", err=True)


def _execute(ctx, scenario_path: str, out: Optional[str], threads: Optional[int], overrides: Sequence[str], rules: Optional[str]):
    config = load_config(ctx.obj.get("config_path"))
    scenario = ScenarioParser().parse(Path(scenario_path), overrides)
    out_dir = Path(out) if out else Path("runs") / scenario.name

    click.echo(f"🚀 Running {scenario.kind} scenario '{scenario.name}' into {out_dir}...")
    runner = ScenarioRunner(config, load_rules_config(rules))
    manifest = runner.run(scenario, out_dir, threads)

    click.echo(f"\n📊 Metrics ({manifest['wall_time_s']:.2f} s):")
    click.echo(format_metrics_table(manifest["metrics"]))
    click.echo(f"\n   Artifacts written: {len(manifest['artifacts'])}")
    click.echo(f"   Findings: {manifest['summary']['total_issues']}")
    for finding in manifest["findings"]:
        click.echo(f"   {format_finding_for_console(finding)}")

    if manifest["status"] == STATUS_OK:
        click.echo(f"{Fore.GREEN}✅ Run passed validity checks{Style.RESET_ALL}")
    else:
        click.echo(f"{Fore.RED}❌ Run status: {manifest['status']}{Style.RESET_ALL}")
    click.echo(f"📝 Manifest saved to {out_dir / 'manifest.json'}")
    return manifest


def _exit_for(manifest) -> None:
    if manifest["status"] == STATUS_PROPAGATION:
        sys.exit(EXIT_PROPAGATION)
    if manifest["status"] != STATUS_OK:
        sys.exit(EXIT_FINDINGS)


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--out", "-o", type=click.Path(file_okay=False), envvar="BFLOW_OUTPUT_DIR",
    help="Run directory (default runs/<scenario name>)",
)
@click.option(
    "--threads", "-t", type=click.IntRange(min=1), envvar="BFLOW_THREADS",
    help="Worker threads for ensembles, scans and FFTs",
)
@click.option(
    "--override", "overrides", multiple=True, metavar="SECTION.KEY=VALUE",
    help="Override a scenario value (repeatable)",
)
@click.option("--rules", "-r", type=click.Path(exists=True), help="Validity rules file")
@click.pass_context
def run(ctx, scenario, out, threads, overrides, rules):
    """Run a scenario and write its artifacts and manifest"""
    try:
        manifest = _execute(ctx, scenario, out, threads, overrides, rules)
    except ScenarioError as e:
        _echo_scenario_errors(e)
        sys.exit(1)
    except Exception as e:
        click.echo(f"❌ Error during run: {str(e)}", err=True)
        sys.exit(1)
    _exit_for(manifest)


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--override", "overrides", multiple=True, metavar="SECTION.KEY=VALUE")
def validate(scenario, overrides):
    """Check a scenario file without running it"""
    try:
        parsed = ScenarioParser().parse(Path(scenario), overrides)
    except ScenarioError as e:
        _echo_scenario_errors(e)
        sys.exit(1)
    except Exception as e:
        click.echo(f"❌ Error during validation: {str(e)}", err=True)
        sys.exit(1)
    click.echo(f"✅ {parsed.name} ({parsed.kind}) is valid")
    click.echo(f"   Inputs hash: {inputs_hash(parsed)}")


def _component(array: np.ndarray, component: Optional[str], style: str) -> np.ndarray:
    if not np.iscomplexobj(array):
        return array
    if component is None:
        component = "real" if style == "signed-redblue" else "density"
    return {
        "density": lambda a: np.abs(a) ** 2,
        "abs": np.abs,
        "real": np.real,
        "imag": np.imag,
    }[component](array)


@cli.command("render")
@click.argument("grid", type=click.Path(exists=True, dir_okay=False))
@click.option("--style", "-s", type=click.Choice(STYLES), required=True, help="Image style")
@click.option("--out", "-o", type=click.Path(dir_okay=False), help="Image path (default next to the grid)")
@click.option(
    "--background", "-b", type=click.Path(exists=True, dir_okay=False),
    help="Potential grid for overlay-potential",
)
@click.option(
    "--component", type=click.Choice(COMPONENTS),
    help="Part of a complex grid to draw (default real for signed, density otherwise)",
)
def render_grid(grid, style, out, background, component):
    """Render a BFLOW1 grid file as a portable graymap/pixmap"""
    try:
        array, header = read_grid(grid)
        data = _component(array, component, style)
        backdrop = None
        if background:
            backdrop, _ = read_grid(background)
            backdrop = _component(backdrop, "real", style)
        image = render(data, style, backdrop)
        target = Path(out) if out else Path(grid).with_suffix(image.extension)
        target.write_bytes(image.data)
    except (GridFormatError, ValueError, OSError) as e:
        click.echo(f"❌ Error rendering {grid}: {str(e)}", err=True)
        sys.exit(1)
    click.echo(f"🖼  {header.name} ({header.nx}x{header.ny}) -> {target}")
    lo, hi = image.value_range
    click.echo(f"   Range [{lo:.6g}, {hi:.6g}], NaN pixels: {image.nan_pixels}")


def parse_grid_spec(text: str) -> List[str]:
    """"aMIN:aMAX:N,qMIN:qMAX:M" -> scenario overrides"""
    try:
        a_part, q_part = text.split(",")
        axes: List[Tuple[float, float, int]] = []
        for part in (a_part, q_part):
            lo, hi, n = part.split(":")
            axes.append((float(lo), float(hi), int(n)))
    except ValueError:
        raise click.BadParameter(f"expected aMIN:aMAX:N,qMIN:qMAX:M, got {text!r}")
    (a0, a1, na), (q0, q1, nq) = axes
    return [
        f"scan.a_range=[{a0!r}, {a1!r}]",
        f"scan.q_range=[{q0!r}, {q1!r}]",
        f"scan.resolution=[{na}, {nq}]",
    ]


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--grid", "grid_spec", required=True, metavar="aMIN:aMAX:N,qMIN:qMAX:M", help="Scan window and resolution")
@click.option("--out", "-o", type=click.Path(file_okay=False), envvar="BFLOW_OUTPUT_DIR")
@click.option("--threads", "-t", type=click.IntRange(min=1), envvar="BFLOW_THREADS")
@click.option("--override", "overrides", multiple=True, metavar="SECTION.KEY=VALUE")
@click.option("--rules", "-r", type=click.Path(exists=True), help="Validity rules file")
@click.pass_context
def scan(ctx, scenario, grid_spec, out, threads, overrides, rules):
    """Run a stability or retention scan over an (a, q) window"""
    window = parse_grid_spec(grid_spec)
    try:
        kind = ScenarioParser().parse(Path(scenario), overrides).kind
        if kind not in SCAN_KINDS:
            raise ValueError(f"scan needs a {' or '.join(SCAN_KINDS)} scenario, got {kind}")
        manifest = _execute(ctx, scenario, out, threads, list(overrides) + window, rules)
    except ScenarioError as e:
        _echo_scenario_errors(e)
        sys.exit(1)
    except Exception as e:
        click.echo(f"❌ Error during scan: {str(e)}", err=True)
        sys.exit(1)
    _exit_for(manifest)


if __name__ == "__main__":
    cli()
