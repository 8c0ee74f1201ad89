"""Fit reports built from a scan series, and plot-ready column data built from reports."""

from __future__ import annotations

import io
import logging
import math
from itertools import combinations
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .analysis.fitting import fit_avoided_crossing, fit_line
from .analysis.tracking import (
    ModeTrajectory,
    TraceFit,
    estimate_tuning_range_modecount,
    fit_series,
    link_candidates,
    trace_fit_points,
)
from .errors import FitError, SchemaError
from .io import SCHEMA_VERSION, atomic_write_text, dumps_json
from .spectra import ScanSeries
from .sphere import C_LIGHT

log = logging.getLogger(__name__)

# a trajectory pair is tried as an avoided crossing when its separation dips
# below this fraction of its value at both ends
CROSSING_CONTRAST = 0.5
MIN_DOUBLET_SAMPLES = 3


def find_crossings(trajectories: Sequence[ModeTrajectory]) -> list[dict]:
    out = []
    for a, b in combinations(trajectories, 2):
        common = np.intersect1d(a.voltages, b.voltages)
        if common.size < 5:
            continue
        ca = np.interp(common, a.voltages, a.centers)
        cb = np.interp(common, b.voltages, b.centers)
        sep = np.abs(ca - cb)
        k = int(np.argmin(sep))
        if k in (0, common.size - 1) or sep[k] > CROSSING_CONTRAST * min(sep[0], sep[-1]):
            continue
        try:
            fit = fit_avoided_crossing(a.voltages, a.centers, b.voltages, b.centers)
        except FitError as exc:
            log.info("crossing %s/%s not fitted: %s", a.label, b.label, exc)
            continue
        rec = {"modes": [a.label, b.label]}
        rec.update(fit.to_dict())
        out.append(rec)
    return out


def doublet_trends(trajectories: Sequence[ModeTrajectory]) -> list[dict]:
    """Linear trend of the resolved doublet splitting against voltage per mode."""
    out = []
    for tr in trajectories:
        mask = tr.splittings > 0
        if int(mask.sum()) < MIN_DOUBLET_SAMPLES:
            continue
        v = tr.voltages[mask]
        s = tr.splittings[mask]
        _, slope, _, slope_err = fit_line(v, s)
        consistent = bool(math.isfinite(slope_err) and abs(slope) <= 3.0 * slope_err) or slope == 0.0
        out.append({
            "mode": tr.label,
            "samples": int(mask.sum()),
            "mean_splitting_hz": float(np.mean(s)),
            "std_splitting_hz": float(np.std(s, ddof=1)) if s.size > 1 else None,
            "slope_hz_per_v": slope if math.isfinite(slope) else None,
            "slope_err_hz_per_v": slope_err if math.isfinite(slope_err) else None,
            "slope_consistent_with_zero": consistent,
        })
    return out


def _mode_spacing(series: ScanSeries, fits: Sequence[TraceFit]) -> Optional[float]:
    comb = (series.scenario or {}).get("comb")
    if isinstance(comb, dict) and comb.get("spacing"):
        return float(comb["spacing"])
    gaps = []
    for f in fits:
        c = np.sort([s.center for s in f.segments])
        gaps.extend(np.diff(c))
    return float(np.median(gaps)) if gaps else None


def build_fit_report(series: ScanSeries, jobs: int = 1, min_depth: float = 0.05) -> dict[str, Any]:
    """Fit every trace, track modes, and collect slopes, crossings, doublets and the range estimate."""
    fits = fit_series(series, min_depth=min_depth, jobs=jobs)
    trajectories = link_candidates([f.pzt_voltage for f in fits], [trace_fit_points(f) for f in fits],
                                   window_width=series.window_width)
    nu_ref = C_LIGHT / series.traces[0].absolute_wavelength
    widths = [w for f in fits for s in f.segments for w in
              ([ln.fwhm for ln in s.lines]) if w > 0]
    q_values = np.array([nu_ref / w for w in widths])

    spacing = _mode_spacing(series, fits)
    range_est = None
    if len(series) >= 2 and spacing:
        range_est = estimate_tuning_range_modecount(
            series, series.window_width, spacing, trajectories=trajectories
        ).to_dict()

    doublets = [s for f in fits for s in f.segments if s.model == "double"]
    summary = {
        "traces": len(series),
        "segments": sum(len(f.segments) for f in fits),
        "trajectories": len(trajectories),
        "median_fwhm_hz": float(np.median(widths)) if widths else None,
        "median_q": float(np.median(q_values)) if q_values.size else None,
        "max_q": float(np.max(q_values)) if q_values.size else None,
        "median_splitting_hz": float(np.median([d.splitting for d in doublets])) if doublets else None,
        "failed_at_voltage": series.failed_at_voltage,
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "fit_report",
        "scenario_name": (series.scenario or {}).get("name"),
        "reference_frequency_hz": nu_ref,
        "window_hz": [float(series.traces[0].frequency_offset[0]), float(series.traces[0].frequency_offset[-1])],
        "voltages": [float(v) for v in series.voltages],
        "summary": summary,
        "traces": [f.to_dict() for f in fits],
        "trajectories": [t.to_dict() for t in trajectories],
        "crossings": find_crossings(trajectories),
        "doublet_trends": doublet_trends(trajectories),
        "range_estimate": range_est,
    }


def summary_text(report: dict) -> str:
    s = report["summary"]

    def fmt(v, unit="", scale=1.0, spec=".4g"):
        return "n/a" if v is None else f"{v / scale:{spec}}{unit}"

    lines = [
        f"traces: {s['traces']}  segments: {s['segments']}  trajectories: {s['trajectories']}",
        f"median FWHM: {fmt(s['median_fwhm_hz'], ' kHz', 1e3)}  median Q: {fmt(s['median_q'])}",
        f"median doublet splitting: {fmt(s['median_splitting_hz'], ' kHz', 1e3)}",
    ]
    for t in report["trajectories"]:
        if t["slope_hz_per_v"] is not None and len(t["voltages"]) >= 3:
            lines.append(f"  {t['label']}: slope {t['slope_hz_per_v'] / 1e6:.4g} MHz/V over "
                         f"{len(t['voltages'])} traces, shift {t['total_shift_hz'] / 1e9:.4g} GHz")
    for c in report["crossings"]:
        lines.append(f"crossing {c['modes'][0]}/{c['modes'][1]}: minimum gap "
                     f"{c['minimum_gap'] / 1e6:.4g} MHz at {c['crossing_voltage']:.4g} V")
    for d in report["doublet_trends"]:
        lines.append(f"doublet {d['mode']}: splitting {d['mean_splitting_hz'] / 1e3:.4g} kHz, "
                     f"slope consistent with zero: {d['slope_consistent_with_zero']}")
    r = report.get("range_estimate")
    if r:
        flag = " (lower bound)" if r["lower_bound"] else ""
        lines.append(f"tuning range (mode count): {r['range_hz'] / 1e9:.4g} GHz{flag}")
    if s.get("failed_at_voltage") is not None:
        lines.append(f"device failed at {s['failed_at_voltage']:.4g} V")
    return "\n".join(lines) + "\n"


def _csv(header: Sequence[str], columns: Sequence[np.ndarray], comment: str) -> str:
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    buf.write(",".join(header) + "\n")
    n = max(len(c) for c in columns)
    for i in range(n):
        row = []
        for c in columns:
            v = c[i] if i < len(c) else math.nan
            row.append("" if not math.isfinite(v) else f"{v:.17g}")
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def stack_offsets(voltages: Sequence[float]) -> np.ndarray:
    """Vertical offsets proportional to voltage, one unit per median voltage step."""
    v = np.asarray(voltages, dtype=float)
    if v.size < 2:
        return np.zeros_like(v)
    step = float(np.median(np.diff(v)))
    return (v - v[0]) / step


def write_plot_data(report: dict, series: Optional[ScanSeries], out_dir, fmt: str = "csv") -> list[Path]:
    """
    Write the stacked scans (if the series is available) and the mode
    trajectories as plot-ready column files; returns the written paths.
    """
    if report.get("kind") != "fit_report":
        raise SchemaError("input is not a fit report")
    out = Path(out_dir)
    written = []

    volts = list(report["voltages"])
    trajs = report["trajectories"]
    shift_cols = []
    for t in trajs:
        col = np.full(len(volts), math.nan)
        c0 = t["centers"][0]
        for v, c in zip(t["voltages"], t["centers"]):
            col[volts.index(v)] = c - c0
        shift_cols.append(col)
    traj_header = ["pzt_voltage_v"] + [f"{t['label']}_shift_hz" for t in trajs]

    if series is not None:
        offsets = stack_offsets(series.voltages)
        f = series.traces[0].frequency_offset
        stack_cols = [f] + [t.transmission + o for t, o in zip(series.traces, offsets)]
        stack_header = ["freq_offset_hz"] + [f"trace_{i:04d}" for i in range(len(series))]

    if fmt == "json":
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": "plot_data",
            "trajectories": {"header": traj_header,
                             "columns": [volts] + [[None if not math.isfinite(x) else float(x) for x in c]
                                                   for c in shift_cols]},
        }
        if series is not None:
            payload["stack"] = {"header": stack_header, "offsets": [float(o) for o in offsets],
                                "columns": [c.tolist() for c in stack_cols]}
        p = out / "plot_data.json"
        atomic_write_text(p, dumps_json(payload))
        return [p]

    p = out / "trajectories.csv"
    atomic_write_text(p, _csv(traj_header, [np.asarray(volts)] + shift_cols,
                              f"wgmbench trajectories schema_version={SCHEMA_VERSION} "
                              "columns=mode shift relative to its first sample [Hz]"))
    written.append(p)
    if series is not None:
        p = out / "stack.csv"
        step = float(np.median(np.diff(series.voltages))) if len(series) > 1 else 0.0
        atomic_write_text(p, _csv(stack_header, stack_cols,
                                  f"wgmbench stack schema_version={SCHEMA_VERSION} "
                                  f"offset=1 per {step:.17g} V"))
        written.append(p)
    return written
