import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgmbench.analysis import (
    TrackPoint,
    detect_dips,
    estimate_tuning_range_modecount,
    fit_trace,
    link_candidates,
    track_modes,
)
from wgmbench.errors import DomainError
from wgmbench.scenario import Scenario
from wgmbench.spectra import DipLine, NoiseModel, ScanSeries, ScanTrace, ScanWindow, synthesize_trace

WINDOW = ScanWindow(-10e9, 10e9, 4001)


def _ladder_series(voltages, rate=1e9, spacing=4e9, seed=0, first=-30e9):
    """Equally spaced dips moving at ``rate`` Hz per step."""
    traces = []
    for i, v in enumerate(voltages):
        shift = rate * i
        lines = [DipLine(c + shift, 2e7, 2e7) for c in np.arange(first, 30e9, spacing)]
        traces.append(synthesize_trace(lines, WINDOW, seed=seed + i, noise=NoiseModel(0.005), pzt_voltage=v))
    return ScanSeries(tuple(traces))


def test_detect_dips_finds_all():
    lines = [DipLine(c, 2e7, 2e7) for c in (-6e9, -1e9, 5e9)]
    t = synthesize_trace(lines, WINDOW, seed=0, noise=NoiseModel(0.01))
    found = detect_dips(t)
    assert [round(d.center / 1e9) for d in found] == [-6, -1, 5]
    assert all(d.fwhm == pytest.approx(8e7, rel=0.5) for d in found)


def test_fit_trace_counts_doublet_once():
    lines = [DipLine(-5e6, 2e6, 2e6), DipLine(5e6, 2e6, 2e6), DipLine(3e9, 2e6, 2e6)]
    t = synthesize_trace(lines, ScanWindow(-1e9, 4e9, 50001), seed=0, noise=NoiseModel(0.005))
    fit = fit_trace(t)
    assert [s.model for s in fit.segments] == ["double", "single"]
    assert fit.segments[0].splitting == pytest.approx(1e7, rel=0.02)


def test_link_two_parallel_lines():
    v = np.arange(10.0)
    cands = [[TrackPoint(1e9 * k), TrackPoint(5e9 + 1e9 * k)] for k in range(10)]
    tr = link_candidates(v, cands)
    assert len(tr) == 2
    assert [t.slope for t in tr] == pytest.approx([1e9, 1e9])


def test_link_bridges_short_gaps_only():
    v = np.arange(12.0)
    cands = [[TrackPoint(1e9 * k)] if k not in (4, 5) else [] for k in range(12)]
    assert len(link_candidates(v, cands, gate=1.5e9, max_gap=2)) == 1
    assert len(link_candidates(v, cands, gate=1.5e9, max_gap=1)) == 2


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_linking_invariant_under_candidate_order(rnd):
    v = np.arange(8.0)
    base = [[TrackPoint(1e9 * k + o) for o in (0.0, 7e9, 15e9)] for k in range(8)]
    shuffled = []
    for c in base:
        c = list(c)
        rnd.shuffle(c)
        shuffled.append(c)
    a = link_candidates(v, base)
    b = link_candidates(v, shuffled)
    assert [t.centers.tolist() for t in a] == [t.centers.tolist() for t in b]


def test_trajectory_validation():
    from wgmbench.analysis import ModeTrajectory

    with pytest.raises(DomainError):
        ModeTrajectory("m", [1.0, 0.5], [0, 0], [0, 0], [0, 0], [0, 1])


@pytest.fixture(scope="module")
def ladder():
    return _ladder_series(np.linspace(0, 10, 31))


def test_modecount_range_on_ladder(ladder):
    est = estimate_tuning_range_modecount(ladder, WINDOW.width, 4e9)
    assert est.range == pytest.approx(30e9, rel=0.15)
    assert est.direction == 1 and not est.lower_bound
    assert est.naive_range == est.modes_seen * 4e9 - WINDOW.width


@settings(max_examples=5, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_modecount_invariant_under_voltage_rescaling(ladder, scale):
    rescaled = ScanSeries(tuple(
        ScanTrace(t.frequency_offset, t.transmission, t.fp_marker, t.absolute_wavelength,
                  pzt_voltage=t.pzt_voltage * scale)
        for t in ladder
    ))
    a = estimate_tuning_range_modecount(ladder, WINDOW.width, 4e9)
    b = estimate_tuning_range_modecount(rescaled, WINDOW.width, 4e9)
    assert (b.range, b.transits_in, b.transits_out) == (a.range, a.transits_in, a.transits_out)


def test_modecount_without_transits_is_lower_bound():
    series = _ladder_series(np.linspace(0, 1, 5), rate=1e8, spacing=100e9, first=0.0)
    est = estimate_tuning_range_modecount(series, WINDOW.width, 100e9)
    assert est.lower_bound
    assert est.range == pytest.approx(4e8, rel=0.05)


def test_modecount_argument_checks(ladder):
    with pytest.raises(DomainError):
        estimate_tuning_range_modecount(ladder, 0.0, 4e9)


def test_track_modes_on_crossing_scenario():
    sc = Scenario.from_dict({
        "name": "two_lines", "seed": 3, "wavelength": 800e-9,
        "sphere": {"radius": 105e-6, "refractive_index": 1.45, "intrinsic_q": 5e8},
        "device": {"sphere_diameter": 210e-6, "stem_diameter": 105e-6, "free_stem_length": 0.004},
        "tuning": {"ramp": {"start": 0.0, "stop": 1.0, "steps": 11}},
        "modes": [{"label": "te", "polarization": "TE", "offset": 0.0, "coupling_ratio": 1.0},
                  {"label": "tm", "polarization": "TM", "offset": 3e9, "coupling_ratio": 1.0}],
        "window": {"start": -2e9, "stop": 8e9, "samples": 10001},
        "laser": {"linewidth": 0.0},
    })
    from wgmbench.spectra import synthesize_pzt_series

    tr = track_modes(synthesize_pzt_series(sc))
    assert len(tr) == 2
    te, tm = sorted(tr, key=lambda t: t.centers[0])
    assert tm.slope / te.slope == pytest.approx(1.3, rel=0.01)
