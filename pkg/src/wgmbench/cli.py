"""
Command-line entry point: ``wgmbench {solve,synth,fit,report}``.

Errors are printed as one line ``wgmbench: error[CODE] message`` on
stderr. Exit codes: 2 invalid input, 3 I/O failure, 4 schema violation,
5 computation failure.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import (
    CalibrationError,
    CapabilityError,
    DomainError,
    FitError,
    ScenarioError,
    SchemaError,
    SolverError,
    WGMError,
)
from .io import SCHEMA_VERSION, atomic_write_text, dumps_json, read_report, read_series, write_json, write_series
from .report import build_fit_report, summary_text, write_plot_data
from .resonance import nearest_mode_number, solve_resonance
from .scenario import Scenario, builtin_scenario_path
from .spectra import synthesize_pzt_series
from .sphere import (
    ModeId,
    Polarization,
    free_spectral_range,
    linewidth_from_q,
    mode_volume_estimate,
    photon_lifetime,
)

log = logging.getLogger("wgmbench")

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_COMPUTE = 5

SOLVE_COLUMNS = (
    "polarization", "n", "l", "frequency_hz", "wavelength_m", "size_parameter",
    "fsr_hz", "q", "linewidth_hz", "lifetime_s", "mode_volume_m3",
)


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wgmbench",
        description="Forward simulation and analysis of strain-tuned microsphere resonances.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="tabulate resonances near the scenario wavelength")
    p.add_argument("--scenario", required=True, help="scenario YAML file or built-in name")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("synth", help="synthesize a PZT-stepped scan series")
    p.add_argument("--scenario", required=True, help="scenario YAML file or built-in name")
    p.add_argument("--out", required=True, help="output directory for the series")
    p.add_argument("--seed", type=_u64, help="64-bit seed (overrides the scenario's)")
    p.add_argument("--jobs", type=_positive_int, default=1)

    p = sub.add_parser("fit", help="fit a scan series and write a JSON report")
    p.add_argument("series", help="series directory (or its manifest.json)")
    p.add_argument("--out", required=True, help="report file")
    p.add_argument("--jobs", type=_positive_int, default=1)

    p = sub.add_parser("report", help="turn a fit report into plot-ready column files")
    p.add_argument("report", help="fit report JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--series", help="series directory for the stacked scans "
                                     "(default: the one recorded in the report)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _load_scenario(ref: str) -> Scenario:
    path = Path(ref)
    if not path.is_file() and not ref.endswith((".yaml", ".yml")):
        path = builtin_scenario_path(ref)
    return Scenario.from_file(path)


def solve_table(scenario: Scenario) -> list[dict]:
    geom = scenario.geometry()
    nu_ref = scenario.reference_frequency
    q_mat = scenario.material_q()
    rows = []
    for pol_name in scenario.solve.polarizations:
        pol = Polarization(pol_name)
        for n in range(1, scenario.solve.radial_orders + 1):
            ls = scenario.solve.l_values or [nearest_mode_number(geom, pol, n, nu_ref)]
            for l in ls:
                res = solve_resonance(geom, pol, n, l)
                wl = res.vacuum_wavelength
                q = q_mat
                rows.append({
                    "polarization": pol.value,
                    "n": n,
                    "l": l,
                    "frequency_hz": res.frequency,
                    "wavelength_m": wl,
                    "size_parameter": res.size_parameter,
                    "fsr_hz": free_spectral_range(geom, wl),
                    "q": q,
                    "linewidth_hz": linewidth_from_q(res.frequency, q) if q else None,
                    "lifetime_s": photon_lifetime(q, res.frequency) if q else None,
                    "mode_volume_m3": mode_volume_estimate(geom, ModeId(n, l, l, pol)) if n == 1 else None,
                })
    return rows


def _format_rows(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return dumps_json({"schema_version": SCHEMA_VERSION, "kind": "mode_table", "columns": list(SOLVE_COLUMNS),
                           "rows": rows})
    buf = io.StringIO()
    buf.write(f"# wgmbench mode_table schema_version={SCHEMA_VERSION}\n")
    buf.write(",".join(SOLVE_COLUMNS) + "\n")
    for r in rows:
        vals = []
        for c in SOLVE_COLUMNS:
            v = r[c]
            vals.append("" if v is None else (f"{v:.10g}" if isinstance(v, float) else str(v)))
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def cmd_solve(args) -> int:
    scenario = _load_scenario(args.scenario)
    text = _format_rows(solve_table(scenario), args.format)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args) -> int:
    scenario = _load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else scenario.seed
    if seed is None:
        raise ScenarioError("seed: no seed given (use --seed or set seed in the scenario)")
    if seed != scenario.seed:
        scenario = scenario.with_updates(seed=seed)
    series = synthesize_pzt_series(scenario, jobs=args.jobs)
    manifest = write_series(series, args.out)
    msg = f"wrote {len(series)} traces to {manifest.parent}"
    if series.failed_at_voltage is not None:
        msg += f" (device failed at {series.failed_at_voltage:.6g} V)"
    print(msg)
    return 0


def cmd_fit(args) -> int:
    series = read_series(args.series)
    report = build_fit_report(series, jobs=args.jobs)
    out = Path(args.out)
    series_dir = Path(args.series)
    if series_dir.is_file():
        series_dir = series_dir.parent
    report["series"] = os.path.relpath(series_dir, out.parent if str(out.parent) else ".")
    write_json(out, report)
    sys.stdout.write(summary_text(report))
    return 0


def cmd_report(args) -> int:
    report = read_report(args.report)
    series = None
    if args.series:
        series = read_series(args.series)
    elif report.get("series"):
        path = Path(args.report).parent / report["series"]
        if (path / "manifest.json").exists():
            series = read_series(path)
        else:
            log.warning("series %s not found; writing trajectories only", path)
    for p in write_plot_data(report, series, args.out, args.format):
        print(p)
    return 0


COMMANDS = {"solve": cmd_solve, "synth": cmd_synth, "fit": cmd_fit, "report": cmd_report}


def _classify(exc: BaseException) -> tuple[str, int]:
    if isinstance(exc, SchemaError):
        return exc.code, EXIT_SCHEMA
    if isinstance(exc, ScenarioError):
        return exc.code, EXIT_VALIDATION
    if isinstance(exc, (DomainError, CapabilityError, SolverError, FitError, CalibrationError, WGMError)):
        return exc.code, EXIT_COMPUTE
    if isinstance(exc, OSError):
        return "E_IO", EXIT_IO
    if isinstance(exc, json.JSONDecodeError):
        return "E_SCHEMA", EXIT_SCHEMA
    return "E_INTERNAL", EXIT_COMPUTE


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("WGMBENCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # one machine-parsable line per failure
        code, status = _classify(exc)
        message = str(exc).replace("\n", " ")
        if isinstance(exc, OSError) and exc.filename:
            message = f"{exc.strerror or exc}: {exc.filename}"
        print(f"wgmbench: error[{code}] {message}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
