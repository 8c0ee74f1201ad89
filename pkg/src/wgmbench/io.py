"""
On-disk formats.

A scan series is a directory holding ``manifest.json`` and one CSV per
trace. Trace files start with a schema comment line followed by the exact
header ``freq_offset_hz,transmission,fp_marker``; values are written with
17 significant digits so a read-back is bit-exact. Reports are JSON.
Nothing time-dependent is written, so identical inputs give identical
bytes. All writes go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .errors import SchemaError
from .spectra import ScanSeries, ScanTrace

SCHEMA_VERSION = "1.0"
TRACE_HEADER = "freq_offset_hz,transmission,fp_marker"
TRACE_MAGIC = "# wgmbench scan_trace schema_version="
MANIFEST_NAME = "manifest.json"


def check_schema_version(version: Any, where: str) -> None:
    if not isinstance(version, str) or not version:
        raise SchemaError(f"{where}: missing schema_version")
    if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise SchemaError(f"{where}: unsupported schema_version {version!r} (reader supports {SCHEMA_VERSION})")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_json(path, data: Any) -> None:
    atomic_write_text(path, dumps_json(data))


def read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def format_trace_csv(trace: ScanTrace) -> str:
    buf = io.StringIO()
    buf.write(f"{TRACE_MAGIC}{SCHEMA_VERSION}\n")
    data = np.column_stack([trace.frequency_offset, trace.transmission, trace.fp_marker])
    np.savetxt(buf, data, fmt="%.17g", delimiter=",", header=TRACE_HEADER, comments="")
    return buf.getvalue()


def parse_trace_csv(text: str, where: str = "trace") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith(TRACE_MAGIC):
        raise SchemaError(f"{where}: line 1 must be '{TRACE_MAGIC}<version>'")
    check_schema_version(lines[0][len(TRACE_MAGIC):].strip(), where)
    if lines[1] != TRACE_HEADER:
        raise SchemaError(f"{where}: line 2 must be the header '{TRACE_HEADER}', got {lines[1]!r}")
    body = lines[2:]
    try:
        data = np.loadtxt(body, delimiter=",", ndmin=2) if body else np.empty((0, 3))
    except ValueError as exc:
        raise SchemaError(f"{where}: malformed data ({exc})") from None
    if data.shape[1] != 3:
        raise SchemaError(f"{where}: expected 3 columns, got {data.shape[1]}")
    return data[:, 0], data[:, 1], data[:, 2]


def _trace_name(i: int) -> str:
    return f"trace_{i:04d}.csv"


def write_series(series: ScanSeries, directory) -> Path:
    """Write a series directory; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, tr in enumerate(series.traces):
        name = _trace_name(i)
        atomic_write_text(d / name, format_trace_csv(tr))
        entries.append({
            "file": name,
            "pzt_voltage": tr.pzt_voltage,
            "absolute_wavelength_m": tr.absolute_wavelength,
            "wavelength_uncertainty_m": tr.wavelength_uncertainty,
            "rng_seed": tr.rng_seed,
            "samples": len(tr),
        })
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "scan_series",
        "failed_at_voltage": series.failed_at_voltage,
        "scenario": series.scenario,
        "traces": entries,
    }
    path = d / MANIFEST_NAME
    write_json(path, manifest)
    return path


def read_series(directory) -> ScanSeries:
    d = Path(directory)
    if d.is_file():
        d = d.parent
    mpath = d / MANIFEST_NAME
    if not mpath.exists():
        raise FileNotFoundError(f"{mpath}: no series manifest")
    manifest = read_json(mpath)
    if not isinstance(manifest, dict):
        raise SchemaError(f"{mpath}: manifest must be an object")
    check_schema_version(manifest.get("schema_version"), str(mpath))
    if manifest.get("kind") != "scan_series":
        raise SchemaError(f"{mpath}: kind must be 'scan_series'")
    entries = manifest.get("traces")
    if not isinstance(entries, list) or not entries:
        raise SchemaError(f"{mpath}: traces: series is empty")
    traces = []
    for i, e in enumerate(entries):
        where = f"{mpath}: traces[{i}]"
        try:
            name = e["file"]
            volt = float(e["pzt_voltage"])
            wl = float(e["absolute_wavelength_m"])
            unc = float(e.get("wavelength_uncertainty_m", 1e-13))
            seed = e.get("rng_seed")
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{where}: missing or invalid field {exc}") from None
        if Path(name).name != name:
            raise SchemaError(f"{where}: file must be a bare file name")
        text = (d / name).read_text(encoding="utf-8")
        f, t, m = parse_trace_csv(text, where=f"{d / name}")
        try:
            traces.append(ScanTrace(f, t, m, wl, unc, volt, None if seed is None else int(seed)))
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from None
    try:
        return ScanSeries(tuple(traces), manifest.get("scenario") or {}, manifest.get("failed_at_voltage"))
    except ValueError as exc:
        raise SchemaError(f"{mpath}: {exc}") from None


def read_report(path, kind: str = "fit_report") -> dict:
    data = read_json(path)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: report must be an object")
    check_schema_version(data.get("schema_version"), str(path))
    if data.get("kind") != kind:
        raise SchemaError(f"{path}: kind must be {kind!r}")
    return data
