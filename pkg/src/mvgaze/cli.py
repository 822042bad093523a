"""Command-line front end.

    mvgaze simulate --config sh.yaml [--seed N] [--jobs N] [--out DIR]
    mvgaze report results/sh.csv results/mh.csv [--out table.csv]
    mvgaze selftest

The output directory is taken from ``--out``, then ``MVGAZE_OUTPUT_DIR``,
then the configuration's ``output_dir``.
"""

from __future__ import annotations

import argparse
import os
import platform
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import config_to_dict, parse_config
from .errors import ConfigError, GazeError
from .experiments import (
    CalibrationBundle,
    MetricsReport,
    read_report_csv,
    run_scenario,
    summarize_rows,
)
from .selftest import run_selftest

OUTPUT_ENV = "MVGAZE_OUTPUT_DIR"
MANIFEST_VERSION = 1
INCOMPLETE_MARKER = "RUN_INCOMPLETE"

RELIABILITY_NOTE = (
    "behavior weights: score = availability / (mean error + epsilon), "
    "normalized over sensors at each calibration point, bilinearly "
    "interpolated with clamped extrapolation and renormalized per grid node"
)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _dump(data) -> str:
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


def versions() -> dict:
    return {
        "mvgaze": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pyyaml": yaml.__version__,
    }


def write_report(report: MetricsReport, directory, manifest: dict | None = None) -> list[Path]:
    """Write ``<name>.csv``, ``<name>.manifest.yaml`` and ``<name>.details.yaml``.

    Args:
        report: rows to write; an empty report yields a header-only CSV.
        directory: created if missing.
        manifest: provenance fields (config snapshot, seed) merged into the
            manifest; tool versions are always added.

    Returns:
        The written paths, CSV first.

    Raises:
        OSError: the directory or a file cannot be written.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{report.name}.csv"
    manifest_path = directory / f"{report.name}.manifest.yaml"
    details_path = directory / f"{report.name}.details.yaml"
    _write_atomic(csv_path, report.to_csv())
    doc = {"version": MANIFEST_VERSION, "name": report.name, "rows": len(report.rows)}
    doc.update(manifest or {})
    doc["versions"] = versions()
    doc["outputs"] = [csv_path.name, details_path.name]
    details = report.summary()
    details["reliability_score"] = RELIABILITY_NOTE
    _write_atomic(details_path, _dump(details))
    _write_atomic(manifest_path, _dump(doc))
    return [csv_path, manifest_path, details_path]


def _calibration_path(directory: Path, spec_name: str) -> Path:
    return Path(directory) / f"{spec_name}.calibration.yaml"


def save_calibrations(bundles, directory, spec_name) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = _calibration_path(directory, spec_name)
    _write_atomic(path, _dump([b.to_dict() for b in bundles]))
    return path


def load_calibrations(directory, spec_name) -> list[CalibrationBundle]:
    path = _calibration_path(directory, spec_name)
    if not path.is_file():
        raise ConfigError(f"{path}: calibration file not found")
    try:
        return [CalibrationBundle.from_dict(d) for d in yaml.safe_load(path.read_text())]
    except (yaml.YAMLError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid calibration file: {exc}") from exc


def _output_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(cfg.output_dir)


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    jobs = cfg.jobs if args.jobs is None else args.jobs
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    out = _output_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE_MARKER
    snapshot = config_to_dict(cfg)
    snapshot["seed"] = seed
    done = []
    _write_atomic(marker, "run started; outputs in this directory may be partial\n")
    try:
        for sc, specs in cfg.scenario_specs(seed):
            combined = MetricsReport(name=sc.name, spec=None)
            per_spec = []
            for spec in specs:
                calibrations = None
                if args.load_calibration:
                    calibrations = load_calibrations(args.load_calibration, spec.name)
                report = run_scenario(spec, jobs=jobs, calibrations=calibrations)
                if args.save_calibration:
                    save_calibrations(report.calibrations, args.save_calibration, spec.name)
                combined.rows.extend(report.rows)
                per_spec.append(report)
            paths = write_report(
                combined,
                out,
                {"seed": seed, "jobs": jobs, "scenario": sc.name, "config": snapshot},
            )
            # per-spec calibration and sensor breakdown alongside the CSV
            details = yaml.safe_load(paths[2].read_text())
            details["runs"] = [r.summary() for r in per_spec]
            _write_atomic(paths[2], _dump(details))
            done.append(sc.name)
            print(f"wrote {paths[0]}")
    except BaseException:
        _write_atomic(
            marker,
            "run failed; only these scenarios completed:\n" + "".join(f"  {n}\n" for n in done),
        )
        raise
    marker.unlink()
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.csv:
        if not Path(path).is_file():
            raise ConfigError(f"{path}: report CSV not found")
        rows.extend(read_report_csv(path))
    if not rows:
        raise ConfigError("report CSVs contain no rows")
    table = summarize_rows(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        _write_atomic(Path(args.out), table)
    else:
        sys.stdout.write(table)
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_selftest(args.seed) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvgaze", description="Multi-view gaze estimation simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the scenarios of a configuration file")
    sim.add_argument("--config", required=True, help="YAML run configuration")
    sim.add_argument("--seed", type=int, help="overrides the configuration seed")
    sim.add_argument("--jobs", type=int, help="worker processes (default from config)")
    sim.add_argument("--out", help="output directory")
    sim.add_argument("--save-calibration", metavar="DIR", help="write calibration models and weight maps")
    sim.add_argument("--load-calibration", metavar="DIR", help="reuse saved calibration, skipping that phase")
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", help="pivot result CSVs into a case0-vs-case1 table")
    rep.add_argument("csv", nargs="+")
    rep.add_argument("--out", help="write the table here instead of stdout")
    rep.set_defaults(func=cmd_report)

    st = sub.add_parser("selftest", help="randomized oracle and property checks")
    st.add_argument("--seed", type=int, default=0)
    st.set_defaults(func=cmd_selftest)
    return parser


def run_command(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GazeError, ValueError, OSError) as exc:
        print(f"mvgaze {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> None:
    sys.exit(run_command(argv))
