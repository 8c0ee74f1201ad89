"""Relative frequency calibration from the reference Fabry-Perot channel."""

from __future__ import annotations

import numpy as np
from scipy.signal import find_peaks

from ..errors import CalibrationError

MIN_PEAKS = 3


def find_fp_peaks(frequency: np.ndarray, marker: np.ndarray) -> np.ndarray:
    """
    Sub-sample positions (on the given axis) of the Fabry-Perot transmission
    peaks. Near a peak 1/T of an Airy function is quadratic in detuning, so a
    three-point parabola on 1/T locates the peak.
    """
    f = np.asarray(frequency, dtype=float)
    m = np.asarray(marker, dtype=float)
    top = float(np.max(m)) if m.size else 0.0
    if not top > 0:
        return np.empty(0)
    idx, _ = find_peaks(m, height=0.5 * top, prominence=0.25 * top)
    pos = []
    for i in idx:
        if i == 0 or i == m.size - 1:
            continue
        y0, y1, y2 = 1.0 / np.maximum(m[i - 1:i + 2], 1e-300)
        den = y0 - 2.0 * y1 + y2
        shift = 0.5 * (y0 - y2) / den if den > 0 else 0.0
        shift = float(np.clip(shift, -0.5, 0.5))
        # non-uniform local spacing: interpolate the axis at the fractional index
        pos.append(float(np.interp(i + shift, np.arange(f.size), f)))
    return np.asarray(pos)


def calibrate_frequency_axis(frequency: np.ndarray, fp_marker: np.ndarray, fp_fsr: float) -> np.ndarray:
    """
    Corrected frequency axis: a piecewise-linear remap that puts consecutive
    Fabry-Perot peaks exactly ``fp_fsr`` apart, anchored at the first peak
    and extended linearly beyond the outer peaks.

    A missed peak is bridged by rounding each gap to a whole number of
    local spacings (the median of up to two neighbouring gaps on each
    side), so a smoothly varying sweep rate is not mistaken for a gap.
    """
    if not fp_fsr > 0:
        raise CalibrationError("fp_fsr must be positive")
    f = np.asarray(frequency, dtype=float)
    peaks = find_fp_peaks(f, fp_marker)
    if peaks.size < MIN_PEAKS:
        raise CalibrationError(f"need at least {MIN_PEAKS} Fabry-Perot peaks, found {peaks.size}")
    gaps = np.diff(peaks)
    steps = np.empty(gaps.size)
    for i in range(gaps.size):
        near = np.r_[gaps[max(0, i - 2):i], gaps[i + 1:i + 3]]
        steps[i] = max(np.rint(gaps[i] / np.median(near)), 1.0)
    orders = np.r_[0, np.cumsum(steps)]
    target = peaks[0] + orders * fp_fsr
    out = np.interp(f, peaks, target)
    lo_slope = (target[1] - target[0]) / (peaks[1] - peaks[0])
    hi_slope = (target[-1] - target[-2]) / (peaks[-1] - peaks[-2])
    below = f < peaks[0]
    above = f > peaks[-1]
    out[below] = target[0] + lo_slope * (f[below] - peaks[0])
    out[above] = target[-1] + hi_slope * (f[above] - peaks[-1])
    return out
