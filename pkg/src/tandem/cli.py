"""Command line front end.

Five subcommands cover the operational surface:

  sim       run one scripted session, or a seed sweep, and print summaries
  replay    re-apply event logs and verify they reproduce exactly
  gantt     export one logged schedule as CSV rows (agent, id, start, finish)
  serve     run the live WebSocket session service for the browser console
  scenario  print or save a built-in scenario as JSON

Scenarios are given either as a JSON file path or as a built-in pattern
name (A, B, C or D). Planner parameter overrides are JSON, inline or in
a file, deep-merged over the defaults so a flag like
``--params '{"cost": {"c_f": 40}}'`` touches nothing else.
"""

from __future__ import annotations

import csv
import json
import statistics
import sys
from pathlib import Path

import click

from .events import EventKind, EventLog, EventRecord, replay_log
from .model import ScenarioConfig
from .planner import PlannerParams
from .scenarios import (
    STUDY_PATTERN_NAMES,
    load_scenario,
    save_scenario,
    study_scenario,
)
from .scheduling import Schedule, gantt_rows
from .simulator import SimConfig, named_script, run_sim, run_summary


def _resolve_scenario(source: str) -> ScenarioConfig:
    """File path or built-in pattern name; anything else is a usage error."""
    path = Path(source)
    if path.is_file():
        try:
            return load_scenario(path)
        except (KeyError, TypeError, ValueError) as exc:
            raise click.UsageError(f"bad scenario file {path}: {exc}")
    name = source.upper()
    if name.startswith("STUDY-"):
        name = name[len("STUDY-"):]
    if name in STUDY_PATTERN_NAMES:
        return study_scenario(name)
    raise click.UsageError(
        f"scenario {source!r} is neither a file nor a built-in pattern "
        f"({', '.join(STUDY_PATTERN_NAMES)})"
    )


def _deep_merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_params(source: str | None) -> PlannerParams:
    """Merge JSON overrides (inline or from a file) into the defaults."""
    if not source:
        return PlannerParams()
    path = Path(source)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    else:
        text = source
    try:
        overrides = json.loads(text)
    except json.JSONDecodeError as exc:
        raise click.UsageError(
            f"--params must be a JSON file or an inline JSON object: {exc}"
        )
    if not isinstance(overrides, dict):
        raise click.UsageError("--params must decode to a JSON object")
    merged = _deep_merge(PlannerParams().to_dict(), overrides)
    try:
        return PlannerParams.from_dict(merged)
    except (KeyError, TypeError, ValueError) as exc:
        raise click.UsageError(f"bad --params value: {exc}")


def _named_script_or_fail(name: str, seed: int):
    try:
        return named_script(name, seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))


def _parse_sweep(text: str) -> range:
    """Accept ``seeds=A..B`` (inclusive) and nothing else."""
    key, sep, span = text.partition("=")
    first, dots, last = span.partition("..")
    if key.strip() != "seeds" or not sep or not dots:
        raise click.UsageError(f'--sweep expects "seeds=A..B", got {text!r}')
    try:
        lo, hi = int(first), int(last)
    except ValueError:
        raise click.UsageError(f"--sweep bounds must be integers, got {text!r}")
    if hi < lo:
        raise click.UsageError(f"--sweep range is empty: {text!r}")
    return range(lo, hi + 1)


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in name).strip("-")


class _CorruptLog(Exception):
    def __init__(self, seq: int, reason: str):
        super().__init__(reason)
        self.seq = seq
        self.reason = reason


def _read_log(path: Path) -> EventLog:
    """Parse JSONL per line so a corrupt record names its seq."""
    records = []
    with path.open(encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                records.append(EventRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise _CorruptLog(index, str(exc))
    return EventLog(records)


@click.group()
def main() -> None:
    """Collaborative pattern-building engine: simulate, verify, serve."""


@main.command()
@click.option("--scenario", "scenario_source", default="A", show_default=True,
              help="Scenario JSON file or built-in pattern name (A-D).")
@click.option("--human", "human_names", default="leader", show_default=True,
              help="Human script; comma-separated list allowed with --sweep.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", default=None, type=click.Path(path_type=Path),
              help="Write logs here: a JSONL file, or a directory with --sweep.")
@click.option("--sweep", default=None, metavar="SEEDS",
              help='Run every (human, seed) combination, e.g. "seeds=1..20".')
@click.option("--params", "params_source", default=None,
              help="Planner parameter overrides as JSON (inline or a file).")
@click.option("--horizon", default=None, type=float,
              help="Stop a run after this much simulated time.")
def sim(scenario_source, human_names, seed, out_path, sweep, params_source, horizon):
    """Run scripted sessions and print per-run or aggregate summaries."""
    scenario = _resolve_scenario(scenario_source)
    params = _load_params(params_source)
    config = SimConfig(scenario=scenario, horizon=horizon)

    if sweep is None:
        if "," in human_names:
            raise click.UsageError("comma-separated --human requires --sweep")
        script = _named_script_or_fail(human_names, seed)
        log = run_sim(config, script, params)
        if out_path is not None:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            log.write_jsonl(out_path)
        _print_summary(run_summary(log), out_path)
        return

    seeds = _parse_sweep(sweep)
    styles = [s.strip() for s in human_names.split(",") if s.strip()]
    if not styles:
        raise click.UsageError("--human must name at least one script")
    for style in styles:
        _named_script_or_fail(style, 0)  # reject bad names before running
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    rows = []
    for style in styles:
        for sd in seeds:
            log = run_sim(config, named_script(style, sd), params)
            rows.append(run_summary(log))
            if out_path is not None:
                log.write_jsonl(out_path / f"{_slug(style)}-{sd:03d}.jsonl")
    _print_aggregate(rows)


def _print_summary(summary: dict, log_path: Path | None) -> None:
    action_counts = summary["actions"]
    total = sum(action_counts.values())
    detail = " ".join(f"{k}:{v}" for k, v in action_counts.items())
    span = summary["makespan"]
    lines = [
        ("style", summary["style"]),
        ("seed", summary["seed"]),
        ("completed", "yes" if summary["completed"] else "NO"),
        ("makespan", f"{span:.1f} s" if span is not None else "n/a"),
        ("actions", f"{total}  ({detail})"),
        ("rejected_actions", summary["rejected_actions"]),
        ("misplacements", summary["misplacements"]),
        ("robot_assignments", summary["robot_assignments"]),
        ("final_p_f", f"{summary['final_p_f']:.3f}"),
        ("final_p_e", f"{summary['final_p_e']:.3f}"),
        ("overall_preference",
         f"{summary['overall_preference']:.3f}  "
         f"({summary['op_method']}, {summary['op_samples']} samples)"),
    ]
    if log_path is not None:
        lines.append(("log", str(log_path)))
    for key, value in lines:
        click.echo(f"{key:<20}{value}")


def _print_aggregate(rows: list[dict]) -> None:
    by_style: dict[str, list[dict]] = {}
    for row in rows:
        by_style.setdefault(str(row["style"]), []).append(row)
    click.echo(
        f"{'style':<26}{'runs':>5}{'done':>6}{'makespan':>10}{'sd':>8}"
        f"{'op':>8}{'p_f':>7}{'p_e':>7}{'R2':>6}"
    )
    for style, group in by_style.items():
        spans = [g["makespan"] for g in group if g["makespan"] is not None]
        mean_span = statistics.mean(spans) if spans else float("nan")
        sd_span = statistics.stdev(spans) if len(spans) > 1 else 0.0
        click.echo(
            f"{style:<26}{len(group):>5}"
            f"{sum(1 for g in group if g['completed']):>6}"
            f"{mean_span:>10.1f}{sd_span:>8.1f}"
            f"{statistics.mean(g['overall_preference'] for g in group):>8.3f}"
            f"{statistics.mean(g['final_p_f'] for g in group):>7.3f}"
            f"{statistics.mean(g['final_p_e'] for g in group):>7.3f}"
            f"{statistics.mean(g['robot_assignments'] for g in group):>6.1f}"
        )
    click.echo(f"{len(rows)} runs")


@main.command()
@click.argument("logs", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False, path_type=Path))
def replay(logs):
    """Verify that each LOG reproduces exactly when re-applied."""
    failures = 0
    for path in logs:
        try:
            log = _read_log(path)
        except _CorruptLog as exc:
            click.echo(f"{path}: CORRUPT at seq {exc.seq}: {exc.reason}")
            failures += 1
            continue
        report = replay_log(log)
        if report.exact:
            click.echo(f"{path}: exact ({report.records} records)")
        else:
            click.echo(
                f"{path}: DIVERGED at seq {report.divergence_seq}: {report.detail}"
            )
            failures += 1
    if failures:
        sys.exit(1)


@main.command()
@click.argument("log_path", metavar="LOG",
                type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--index", default=-1, show_default=True, type=int,
              help="Which schedule record to export; negative counts from the end.")
@click.option("--out", "out_path", default=None,
              type=click.Path(dir_okay=False, path_type=Path),
              help="CSV file (default: stdout).")
def gantt(log_path, index, out_path):
    """Export one schedule from LOG as CSV rows agent,id,start,finish."""
    try:
        log = _read_log(log_path)
    except _CorruptLog as exc:
        raise click.ClickException(f"{log_path}: corrupt record at seq {exc.seq}")
    schedules = log.of_kind(EventKind.SCHEDULE)
    if not schedules:
        raise click.ClickException(f"{log_path} contains no schedule records")
    try:
        record = schedules[index]
    except IndexError:
        raise click.ClickException(
            f"schedule index {index} out of range ({len(schedules)} available)"
        )
    rows = gantt_rows(Schedule.from_dict(record.payload))

    def write(fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(["agent", "id", "start", "finish"])
        for agent in sorted(rows):
            for uid, start, finish in rows[agent]:
                writer.writerow([agent, uid, f"{start:.3f}", f"{finish:.3f}"])

    if out_path is None:
        write(click.get_text_stream("stdout"))
    else:
        with out_path.open("w", newline="", encoding="utf-8") as fh:
            write(fh)
        click.echo(f"wrote {out_path}")


@main.command()
@click.option("--scenario", "scenario_source", default="A", show_default=True,
              help="Scenario JSON file or built-in pattern name (A-D).")
@click.option("--port", default=8765, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--realtime-factor", default=0.2, show_default=True, type=float,
              help="Wall seconds per simulated second of robot motion.")
@click.option("--log-dir", default=Path("."), show_default=True,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--params", "params_source", default=None,
              help="Planner parameter overrides as JSON (inline or a file).")
def serve(scenario_source, port, host, realtime_factor, log_dir, params_source):
    """Run the live WebSocket session service."""
    from .service import ServiceConfig, serve_session

    scenario = _resolve_scenario(scenario_source)
    params = _load_params(params_source)
    if realtime_factor < 0:
        raise click.UsageError("--realtime-factor must be >= 0")
    log_dir.mkdir(parents=True, exist_ok=True)
    config = ServiceConfig(
        scenario=scenario,
        params=params,
        realtime_factor=realtime_factor,
        log_dir=log_dir,
    )
    click.echo(
        f"serving {scenario.name} on ws://{host}:{port}/session "
        f"(realtime factor {realtime_factor})"
    )
    serve_session(port, config, host=host)


@main.command()
@click.argument("name")
@click.option("--out", "out_path", default=None,
              type=click.Path(dir_okay=False, path_type=Path),
              help="Write the JSON here instead of stdout.")
def scenario(name, out_path):
    """Print a scenario (built-in pattern name or file) as JSON."""
    config = _resolve_scenario(name)
    if out_path is None:
        click.echo(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    else:
        save_scenario(config, out_path)
        click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
