"""Dip detection, line-shape fits, mode tracking and axis calibration."""

from .calibration import calibrate_frequency_axis, find_fp_peaks
from .fitting import (
    FIT_MODELS,
    CrossingFit,
    DoubletFit,
    LineEstimate,
    LineFit,
    fit_avoided_crossing,
    fit_line,
    fit_lines,
    fit_lorentzian_doublet,
)
from .tracking import (
    DipCandidate,
    ModeTrajectory,
    RangeEstimate,
    TraceFit,
    TrackPoint,
    detect_dips,
    estimate_tuning_range_modecount,
    fit_series,
    fit_trace,
    link_candidates,
    track_modes,
)

__all__ = [
    "FIT_MODELS",
    "CrossingFit",
    "DipCandidate",
    "DoubletFit",
    "LineEstimate",
    "LineFit",
    "ModeTrajectory",
    "RangeEstimate",
    "TraceFit",
    "TrackPoint",
    "calibrate_frequency_axis",
    "detect_dips",
    "estimate_tuning_range_modecount",
    "find_fp_peaks",
    "fit_avoided_crossing",
    "fit_line",
    "fit_lines",
    "fit_lorentzian_doublet",
    "fit_series",
    "fit_trace",
    "link_candidates",
    "track_modes",
]
