"""
Dip detection in single traces, mode tracking across PZT steps and the
mode-counting estimate of the tuning range.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks

from ..errors import DomainError, FitError
from ..spectra import ScanSeries, ScanTrace
from .fitting import MIN_SEGMENT_SAMPLES, DoubletFit, fit_line, fit_lorentzian_doublet

log = logging.getLogger(__name__)

# neighbouring candidates closer than this many widths are fitted together
CLUSTER_WIDTHS = 3.0
# fit segment half-span in widths around a cluster
SEGMENT_WIDTHS = 4.0
LINEARITY_ASSUMPTION = (
    "modes tune linearly and uniformly with voltage, so every transit through a window edge "
    "corresponds to one mean mode spacing of tuning"
)


@dataclass(frozen=True)
class DipCandidate:
    center: float
    depth: float
    fwhm: float
    prominence: float
    index: int


def _noise_level(y: np.ndarray) -> float:
    d = np.diff(y)
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(2.0))


def _half_depth_width(s: np.ndarray, p: int, tol: float) -> float:
    """
    Full width (samples) at half the dip depth. A side that climbs by more
    than ``tol`` above its running minimum has run into a neighbouring dip
    before reaching half depth; it is then replaced by the other side, so
    close doublets do not inflate each other's width.
    """
    half = 0.5 * s[p]
    sides = []
    for step in (-1, 1):
        i = p
        low = s[p]
        blocked = False
        while 0 <= i + step < s.size and s[i + step] > half:
            i += step
            low = min(low, s[i])
            if s[i] > low + tol:
                blocked = True
                break
        if blocked or not 0 <= i + step < s.size:
            sides.append(None)
            continue
        # linear interpolation of the half-depth crossing
        a, b = s[i], s[i + step]
        sides.append(abs(i - p) + (a - half) / (a - b) if a != b else abs(i - p))
    known = [x for x in sides if x is not None]
    if not known:
        return float(s.size)
    if len(known) == 1:
        return max(2.0 * known[0], 1.0)
    return max(known[0] + known[1], 1.0)


def detect_dips(
    trace: ScanTrace,
    min_depth: float = 0.05,
    min_separation: float = 0.0,
    smooth_samples: float = 1.0,
) -> list[DipCandidate]:
    """
    Local minima of the (lightly smoothed) trace deeper than ``min_depth``
    below the baseline, at least ``min_separation`` Hz apart. The baseline
    is the 80th percentile of the trace, which stays near the off-resonant
    level even when dips fill most of the window.

    Candidates must also stand out from their surroundings by a prominence
    of max(min_depth / 2, 8 x the smoothed noise level), which keeps noise
    ripples on the floor of a broad dip from splitting it.
    """
    f = trace.frequency_offset
    y = trace.transmission
    base = float(np.percentile(y, 80))
    if not base > 0:
        return []
    s = 1.0 - y / base
    if smooth_samples > 0:
        s_smooth = gaussian_filter1d(s, smooth_samples, mode="nearest")
        noise_gain = 1.0 / math.sqrt(2.0 * math.sqrt(math.pi) * smooth_samples)
    else:
        s_smooth = s
        noise_gain = 1.0
    noise = _noise_level(s) * noise_gain
    df = trace.sample_spacing
    distance = max(1, int(math.ceil(min_separation / df))) if min_separation > 0 else None
    min_prominence = max(0.5 * min_depth, 8.0 * noise)
    peaks, props = find_peaks(
        s_smooth,
        height=min_depth,
        prominence=min_prominence,
        distance=distance,
    )
    if peaks.size == 0:
        return []
    out = []
    for p, prom in zip(peaks, props["prominences"]):
        c = float(f[p])
        if 0 < p < f.size - 1:
            y0, y1, y2 = s_smooth[p - 1], s_smooth[p], s_smooth[p + 1]
            den = y0 - 2.0 * y1 + y2
            if den < 0:
                c += 0.5 * (y0 - y2) / den * df
        out.append(DipCandidate(center=c, depth=float(s[p]), fwhm=_half_depth_width(s_smooth, p, min_prominence) * df,
                                prominence=float(prom), index=int(p)))
    out.sort(key=lambda d: d.center)
    return out


@dataclass(frozen=True)
class TraceFit:
    """Segment fits of one trace; each segment is one mode (a doublet counts once)."""

    trace_index: int
    pzt_voltage: float
    segments: tuple[DoubletFit, ...]
    failed_segments: int = 0

    def to_dict(self) -> dict:
        return {
            "trace_index": self.trace_index,
            "pzt_voltage": self.pzt_voltage,
            "failed_segments": self.failed_segments,
            "segments": [s.to_dict() for s in self.segments],
        }


def _clusters(cands: Sequence[DipCandidate]) -> list[list[DipCandidate]]:
    groups: list[list[DipCandidate]] = []
    for c in cands:
        if groups and len(groups[-1]) < 2:
            prev = groups[-1][-1]
            if c.center - prev.center < CLUSTER_WIDTHS * max(c.fwhm, prev.fwhm):
                groups[-1].append(c)
                continue
        groups.append([c])
    return groups


def fit_trace(trace: ScanTrace, min_depth: float = 0.05, trace_index: int = 0) -> TraceFit:
    """Detect dips, group close pairs and fit each group with the doublet model."""
    f = trace.frequency_offset
    y = trace.transmission
    fits = []
    failed = 0
    for group in _clusters(detect_dips(trace, min_depth=min_depth)):
        w = max(c.fwhm for c in group)
        lo_f = group[0].center - SEGMENT_WIDTHS * w
        hi_f = group[-1].center + SEGMENT_WIDTHS * w
        lo = int(np.searchsorted(f, lo_f, side="left"))
        hi = int(np.searchsorted(f, hi_f, side="right"))
        if hi - lo < MIN_SEGMENT_SAMPLES:
            mid = (lo + hi) // 2
            lo = max(0, mid - MIN_SEGMENT_SAMPLES // 2)
            hi = min(f.size, lo + MIN_SEGMENT_SAMPLES)
            lo = max(0, hi - MIN_SEGMENT_SAMPLES)
        guess = [(c.center, c.fwhm, min(c.depth, 1.0)) for c in group]
        try:
            fit = fit_lorentzian_doublet(f[lo:hi], y[lo:hi], guess)
        except (FitError, DomainError) as exc:
            log.debug("segment at %.6g Hz skipped: %s", group[0].center, exc)
            failed += 1
            continue
        if not (f[lo] <= fit.center <= f[hi - 1]) or fit.fwhm_1 <= 0:
            failed += 1
            continue
        fits.append(fit)
    return TraceFit(trace_index, trace.pzt_voltage, tuple(fits), failed)


def fit_series(series: ScanSeries, min_depth: float = 0.05, jobs: int = 1) -> list[TraceFit]:
    items = list(enumerate(series.traces))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda it: fit_trace(it[1], min_depth, it[0]), items))
    return [fit_trace(t, min_depth, i) for i, t in items]


@dataclass(frozen=True)
class TrackPoint:
    """One linked observation: a mode position in one trace."""

    center: float
    fwhm: float = math.nan
    splitting: float = 0.0
    center_err: float = math.nan


@dataclass(frozen=True, eq=False)
class ModeTrajectory:
    label: str
    voltages: np.ndarray
    centers: np.ndarray
    widths: np.ndarray
    splittings: np.ndarray
    trace_indices: np.ndarray
    slope: float = math.nan
    slope_err: float = math.nan
    intercept: float = math.nan

    def __post_init__(self) -> None:
        for name in ("voltages", "centers", "widths", "splittings", "trace_indices"):
            a = np.array(getattr(self, name))
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if self.voltages.size == 0:
            raise DomainError("a trajectory needs at least one sample")
        if np.any(np.diff(self.voltages) <= 0):
            raise DomainError("trajectory voltages must be strictly increasing")

    def __len__(self) -> int:
        return self.voltages.size

    @property
    def slope_defined(self) -> bool:
        return math.isfinite(self.slope)

    @property
    def total_shift(self) -> float:
        return float(self.centers[-1] - self.centers[0])

    def to_dict(self) -> dict:
        def clean(a):
            return [float(v) if math.isfinite(v) else None for v in a]

        return {
            "label": self.label,
            "slope_hz_per_v": self.slope if self.slope_defined else None,
            "slope_err_hz_per_v": self.slope_err if math.isfinite(self.slope_err) else None,
            "total_shift_hz": self.total_shift,
            "voltages": clean(self.voltages),
            "centers": clean(self.centers),
            "widths": clean(self.widths),
            "splittings": clean(self.splittings),
            "trace_indices": [int(i) for i in self.trace_indices],
        }


def _predict(samples: list, v: float, fallback_slope: float) -> float:
    if len(samples) >= 2:
        tail = samples[-5:]
        _, slope, _, _ = fit_line([s[0] for s in tail], [s[1].center for s in tail])
    else:
        slope = fallback_slope
    last_v, last = samples[-1][0], samples[-1][1]
    return last.center + (slope if math.isfinite(slope) else 0.0) * (v - last_v)


def _default_gate(candidate_lists: Sequence[Sequence[TrackPoint]], window_width: Optional[float]) -> float:
    gaps = []
    for cands in candidate_lists:
        c = np.sort([p.center for p in cands])
        gaps.extend(np.diff(c))
    if gaps:
        return 0.5 * float(np.median(gaps))
    return 0.25 * window_width if window_width else math.inf


def link_candidates(
    voltages: Sequence[float],
    candidate_lists: Sequence[Sequence[TrackPoint]],
    gate: Optional[float] = None,
    max_gap: int = 2,
    window_width: Optional[float] = None,
) -> list[ModeTrajectory]:
    """
    Greedy nearest-neighbour linking with linear slope prediction.

    At every step all (trajectory, candidate) pairs within ``gate`` of the
    predicted position are ranked by residual, then by candidate frequency,
    and accepted one by one. A trajectory missing more than ``max_gap``
    consecutive steps is closed; leftover candidates open new ones.

    The default gate is half the median spacing of neighbouring candidates,
    or a quarter of ``window_width`` when no trace holds two candidates.
    """
    volts = [float(v) for v in voltages]
    if len(volts) != len(candidate_lists):
        raise DomainError("one candidate list per voltage is required")
    if np.any(np.diff(volts) <= 0):
        raise DomainError("voltages must be strictly increasing")
    lists = [sorted(c, key=lambda p: (p.center, p.fwhm, p.splitting)) for c in candidate_lists]
    if gate is None:
        gate = _default_gate(lists, window_width)

    # each track: samples [(v, point, trace_index)], misses
    tracks: list[dict] = []
    for t, (v, cands) in enumerate(zip(volts, lists)):
        active = [tr for tr in tracks if tr["open"]]
        slopes = []
        for tr in active:
            if len(tr["samples"]) >= 2:
                s = tr["samples"]
                slopes.append((s[-1][1].center - s[0][1].center) / (s[-1][0] - s[0][0]))
        fallback = float(np.median(slopes)) if slopes else 0.0
        preds = [_predict(tr["samples"], v, fallback) for tr in active]
        pairs = []
        for ti, pred in enumerate(preds):
            for ci, p in enumerate(cands):
                r = abs(p.center - pred)
                if r <= gate:
                    pairs.append((r, p.center, ti, ci))
        pairs.sort()
        used_t, used_c = set(), set()
        for r, _, ti, ci in pairs:
            if ti in used_t or ci in used_c:
                continue
            used_t.add(ti)
            used_c.add(ci)
            active[ti]["samples"].append((v, cands[ci], t))
            active[ti]["miss"] = 0
        for ti, tr in enumerate(active):
            if ti not in used_t:
                tr["miss"] += 1
                if tr["miss"] > max_gap:
                    tr["open"] = False
        for ci, p in enumerate(cands):
            if ci not in used_c:
                tracks.append({"samples": [(v, p, t)], "miss": 0, "open": True})

    out = []
    for k, tr in enumerate(tracks):
        s = tr["samples"]
        vs = np.array([x[0] for x in s])
        cs = np.array([x[1].center for x in s])
        icpt, slope, _, slope_err = fit_line(vs, cs)
        out.append(ModeTrajectory(
            label=f"mode{k:03d}",
            voltages=vs,
            centers=cs,
            widths=np.array([x[1].fwhm for x in s]),
            splittings=np.array([x[1].splitting for x in s]),
            trace_indices=np.array([x[2] for x in s], dtype=int),
            slope=slope,
            slope_err=slope_err,
            intercept=icpt,
        ))
    return out


def trace_fit_points(fit: TraceFit) -> list[TrackPoint]:
    pts = []
    for seg in fit.segments:
        err = seg.chosen.lines[0].center_err if seg.model == "single" else math.hypot(
            seg.lines[0].center_err, seg.lines[1].center_err) / 2
        pts.append(TrackPoint(center=seg.center, fwhm=max(seg.fwhm_1, seg.fwhm_2),
                              splitting=seg.splitting, center_err=err))
    return pts


def track_modes(
    series: ScanSeries,
    fits: Optional[Sequence[TraceFit]] = None,
    gate: Optional[float] = None,
    max_gap: int = 2,
    min_depth: float = 0.05,
    jobs: int = 1,
) -> list[ModeTrajectory]:
    """Fit every trace (unless ``fits`` is given) and link the modes across voltage steps."""
    if fits is None:
        fits = fit_series(series, min_depth=min_depth, jobs=jobs)
    return link_candidates(
        [f.pzt_voltage for f in fits], [trace_fit_points(f) for f in fits], gate=gate, max_gap=max_gap,
        window_width=series.window_width,
    )


@dataclass(frozen=True)
class RangeEstimate:
    """
    Mode-counting tuning range. ``range`` is the mean of the edge-transit
    counts times the mode spacing; ``naive_range`` counts every mode seen
    and subtracts the window width. With no transits the largest tracked
    displacement is returned and ``lower_bound`` is set.
    """

    range: float
    transits_in: int
    transits_out: int
    modes_seen: int
    naive_range: float
    mean_mode_spacing: float
    window_width: float
    direction: int
    lower_bound: bool
    assumption: str = LINEARITY_ASSUMPTION

    @property
    def transits(self) -> float:
        return 0.5 * (self.transits_in + self.transits_out)

    def to_dict(self) -> dict:
        return {
            "range_hz": self.range,
            "transits_in": self.transits_in,
            "transits_out": self.transits_out,
            "modes_seen": self.modes_seen,
            "naive_range_hz": self.naive_range,
            "mean_mode_spacing_hz": self.mean_mode_spacing,
            "window_width_hz": self.window_width,
            "direction": self.direction,
            "lower_bound": self.lower_bound,
            "assumption": self.assumption,
        }


def estimate_tuning_range_modecount(
    series: ScanSeries,
    window_width: float,
    mean_mode_spacing: float,
    trajectories: Optional[Sequence[ModeTrajectory]] = None,
    edge_margin: Optional[float] = None,
) -> RangeEstimate:
    """
    Count modes entering and leaving the scan window while the voltage is
    ramped; each transit is one mean mode spacing of tuning.

    Only the order of the traces matters, not the voltage values, so the
    estimate is unchanged by rescaling the voltage axis.
    """
    if not window_width > 0:
        raise DomainError("window_width must be positive")
    if not mean_mode_spacing > 0:
        raise DomainError("mean_mode_spacing must be positive")
    if trajectories is None:
        trajectories = track_modes(series)
    n_traces = len(series)
    f = series.traces[0].frequency_offset
    lo_edge, hi_edge = float(f[0]), float(f[-1])

    # per-step displacements give direction and typical step size
    steps = []
    widths = []
    for tr in trajectories:
        if len(tr) >= 2:
            di = np.diff(tr.trace_indices)
            steps.extend(np.diff(tr.centers) / di)
        widths.extend(w for w in tr.widths if math.isfinite(w))
    step = float(np.median(steps)) if steps else 0.0
    direction = 1 if step > 0 else (-1 if step < 0 else 0)
    if edge_margin is None:
        w = float(np.median(widths)) if widths else 0.0
        edge_margin = 3.0 * abs(step) + SEGMENT_WIDTHS * w + 0.01 * (hi_edge - lo_edge)

    entry_edge, exit_edge = (lo_edge, hi_edge) if direction >= 0 else (hi_edge, lo_edge)
    n_in = n_out = 0
    for tr in trajectories:
        if direction == 0:
            break
        if tr.trace_indices[0] > 0 and abs(tr.centers[0] - entry_edge) <= edge_margin:
            n_in += 1
        if tr.trace_indices[-1] < n_traces - 1 and abs(tr.centers[-1] - exit_edge) <= edge_margin:
            n_out += 1
    seen = len(trajectories)
    naive = seen * mean_mode_spacing - window_width
    if n_in + n_out == 0:
        shift = max((abs(t.total_shift) for t in trajectories), default=0.0)
        return RangeEstimate(shift, 0, 0, seen, naive, mean_mode_spacing, window_width, direction, True)
    rng = 0.5 * (n_in + n_out) * mean_mode_spacing
    return RangeEstimate(rng, n_in, n_out, seen, naive, mean_mode_spacing, window_width, direction, False)
