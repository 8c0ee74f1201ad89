"""
Coupled-mode effects and synthesis of laser-scan traces.

A trace is the prism-reflected intensity recorded while a laser sweeps a
fixed frequency window, together with the transmission of a reference
Fabry-Perot cavity. A series stacks such traces over PZT voltage steps.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Optional, Sequence

import numpy as np

from .errors import DomainError
from .sphere import C_LIGHT

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import Scenario

log = logging.getLogger(__name__)

# dips are evaluated out to this many half-widths; the Lorentzian tail
# beyond is below 1e-8 of the depth
_DIP_REACH = 1e4
_U64 = 2**64


class CouplingKind(str, enum.Enum):
    BACKSCATTER = "backscatter"
    POLARIZATION = "polarization"


@dataclass(frozen=True)
class TwoModeCoupling:
    """Coupling of strength ``g`` [Hz] between two modes (by label)."""

    kind: CouplingKind
    g: float
    mode_a: str
    mode_b: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CouplingKind(self.kind))
        if not self.g >= 0:
            raise DomainError(f"coupling g must be >= 0, got {self.g}")
        if self.kind is CouplingKind.POLARIZATION and self.mode_b is None:
            raise DomainError("polarization coupling needs two modes")

    @property
    def minimum_splitting(self) -> float:
        return 2.0 * self.g


def doublet_frequencies(nu0: float, g: float) -> tuple[float, float]:
    """Backscattering splits a +-m pair into two standing-wave modes 2g apart."""
    if not g >= 0:
        raise DomainError(f"g must be >= 0, got {g}")
    return nu0 - g, nu0 + g


def avoided_crossing(nu_a, nu_b, g):
    """
    Eigenfrequencies (lower, upper) of two modes coupled with strength g.

    nu_pm = (nu_a + nu_b)/2 +- sqrt((nu_a - nu_b)^2/4 + g^2)
    """
    if not np.all(np.asarray(g) >= 0):
        raise DomainError("g must be >= 0")
    nu_a = np.asarray(nu_a, dtype=float)
    nu_b = np.asarray(nu_b, dtype=float)
    mean = 0.5 * (nu_a + nu_b)
    half = np.sqrt(0.25 * (nu_a - nu_b) ** 2 + np.asarray(g, dtype=float) ** 2)
    return mean - half, mean + half


def upper_branch_weight(nu_a, nu_b, g):
    """Fraction |c_a|^2 of mode a in the upper branch (the lower branch holds 1 - w)."""
    delta = np.asarray(nu_a, dtype=float) - np.asarray(nu_b, dtype=float)
    g = np.asarray(g, dtype=float)
    with np.errstate(invalid="ignore"):
        split = np.sqrt(delta**2 + 4.0 * g**2)
        w = 0.5 * (1.0 + np.where(split > 0, delta / np.where(split > 0, split, 1.0), 0.0))
    return w


@dataclass(frozen=True)
class DipLine:
    """One resonance as seen by the scan: centre offset and half-width rates [Hz]."""

    center: float
    kappa0: float
    kappa_c: float
    label: str = ""

    def __post_init__(self) -> None:
        vals = (self.center, self.kappa0, self.kappa_c)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite line parameters for {self.label!r}: {vals}")
        if not self.kappa0 > 0 or self.kappa_c < 0:
            raise DomainError(f"invalid rates for {self.label!r}: kappa0={self.kappa0}, kappa_c={self.kappa_c}")

    @property
    def half_width(self) -> float:
        return self.kappa0 + self.kappa_c

    @property
    def fwhm(self) -> float:
        return 2.0 * self.half_width

    @property
    def depth(self) -> float:
        return 4.0 * self.kappa0 * self.kappa_c / self.half_width**2


@dataclass(frozen=True)
class ScanWindow:
    start: float
    stop: float
    samples: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise DomainError("window bounds must be finite")
        if not self.stop > self.start:
            raise DomainError("window width must be positive")
        if self.samples < 100:
            raise DomainError(f"window needs >= 100 samples, got {self.samples}")

    @property
    def width(self) -> float:
        return self.stop - self.start

    def axis(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.samples)


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian noise of std ``sigma`` and a random linear baseline tilt of std ``drift``."""

    sigma: float = 0.01
    drift: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma < 0 or self.drift < 0:
            raise DomainError("noise parameters must be >= 0")


@dataclass(frozen=True)
class LaserModel:
    """
    Lorentzian laser line of full width ``linewidth`` [Hz] (0 for a
    grating-stabilised laser) and a quadratic sweep error: the true
    frequency departs from the nominal axis by up to
    ``sweep_nonlinearity`` times the window width at mid-scan.
    """

    linewidth: float = 0.0
    sweep_nonlinearity: float = 0.0

    def __post_init__(self) -> None:
        if self.linewidth < 0:
            raise DomainError("laser linewidth must be >= 0")
        if not abs(self.sweep_nonlinearity) < 0.25:
            raise DomainError("|sweep_nonlinearity| must be < 0.25 to keep the sweep monotone")

    def true_axis(self, nominal: np.ndarray) -> np.ndarray:
        if self.sweep_nonlinearity == 0.0:
            return nominal
        span = nominal[-1] - nominal[0]
        u = (nominal - nominal[0]) / span
        return nominal + 4.0 * self.sweep_nonlinearity * span * u * (1.0 - u)


@dataclass(frozen=True)
class FabryPerot:
    """Reference cavity producing Airy transmission peaks every ``fsr`` Hz."""

    fsr: float
    finesse: float = 50.0
    phase: float = 0.0

    def __post_init__(self) -> None:
        if not self.fsr > 0 or not self.finesse > 0:
            raise DomainError("Fabry-Perot fsr and finesse must be positive")

    def transmission(self, frequency) -> np.ndarray:
        coeff = (2.0 * self.finesse / math.pi) ** 2
        s = np.sin(math.pi * (np.asarray(frequency, dtype=float) - self.phase) / self.fsr)
        return 1.0 / (1.0 + coeff * s * s)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ScanTrace:
    """
    One laser sweep. ``frequency_offset`` is the nominal axis relative to
    ``absolute_wavelength`` (known to ``wavelength_uncertainty``).
    """

    frequency_offset: np.ndarray
    transmission: np.ndarray
    fp_marker: np.ndarray
    absolute_wavelength: float
    wavelength_uncertainty: float = 1e-13
    pzt_voltage: float = 0.0
    rng_seed: Optional[int] = None

    def __post_init__(self) -> None:
        f = _frozen(self.frequency_offset)
        t = _frozen(self.transmission)
        m = _frozen(self.fp_marker)
        if f.ndim != 1 or f.size < 2:
            raise DomainError("a trace needs at least 2 samples")
        if t.shape != f.shape or m.shape != f.shape:
            raise DomainError("trace arrays must have equal length")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t)) and np.all(np.isfinite(m))):
            raise DomainError("trace contains non-finite values")
        if not np.all(np.diff(f) > 0):
            raise DomainError("frequency_offset must be strictly increasing")
        if not self.absolute_wavelength > 0:
            raise DomainError("absolute_wavelength must be positive")
        object.__setattr__(self, "frequency_offset", f)
        object.__setattr__(self, "transmission", t)
        object.__setattr__(self, "fp_marker", m)

    def __len__(self) -> int:
        return self.frequency_offset.size

    @property
    def reference_frequency(self) -> float:
        return C_LIGHT / self.absolute_wavelength

    @property
    def sample_spacing(self) -> float:
        return float((self.frequency_offset[-1] - self.frequency_offset[0]) / (len(self) - 1))

    @property
    def span(self) -> float:
        return float(self.frequency_offset[-1] - self.frequency_offset[0])

    def same_data(self, other: "ScanTrace") -> bool:
        return (
            np.array_equal(self.frequency_offset, other.frequency_offset)
            and np.array_equal(self.transmission, other.transmission)
            and np.array_equal(self.fp_marker, other.fp_marker)
            and self.pzt_voltage == other.pzt_voltage
            and self.absolute_wavelength == other.absolute_wavelength
            and self.rng_seed == other.rng_seed
        )


@dataclass(frozen=True, eq=False)
class ScanSeries:
    """Traces ordered by strictly increasing PZT voltage over one shared window."""

    traces: tuple[ScanTrace, ...]
    scenario: dict[str, Any] = field(default_factory=dict)
    failed_at_voltage: Optional[float] = None

    def __post_init__(self) -> None:
        traces = tuple(self.traces)
        if not traces:
            raise DomainError("a series needs at least one trace")
        volts = np.array([t.pzt_voltage for t in traces])
        if np.any(np.diff(volts) <= 0):
            raise DomainError("trace voltages must be strictly increasing")
        axis = traces[0].frequency_offset
        for t in traces[1:]:
            if t.frequency_offset.shape != axis.shape or not np.allclose(t.frequency_offset, axis, rtol=0, atol=1e-9 * max(1.0, abs(t.span))):
                raise DomainError("all traces of a series must share the frequency window")
        object.__setattr__(self, "traces", traces)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def voltages(self) -> np.ndarray:
        return np.array([t.pzt_voltage for t in self.traces])

    @property
    def window_width(self) -> float:
        return self.traces[0].span


def derived_seed(seed: int, index: int) -> int:
    """Per-trace seed, seed + index wrapped to 64 bits."""
    return (int(seed) + int(index)) % _U64


def noiseless_transmission(true_axis: np.ndarray, lines: Sequence[DipLine], laser_linewidth: float = 0.0) -> np.ndarray:
    """
    Product of the single-port dips of all lines, each convolved with a
    Lorentzian laser line (exact for one Lorentzian: the half-width grows
    by half the laser width and the depth drops by the same ratio).
    """
    out = np.ones_like(true_axis, dtype=float)
    gamma = 0.5 * laser_linewidth
    for line in lines:
        k = line.half_width
        k_eff = k + gamma
        depth = line.depth * k / k_eff
        if depth == 0.0:
            continue
        lo = np.searchsorted(true_axis, line.center - _DIP_REACH * k_eff, side="left")
        hi = np.searchsorted(true_axis, line.center + _DIP_REACH * k_eff, side="right")
        if hi <= lo:
            continue
        d = true_axis[lo:hi] - line.center
        out[lo:hi] *= 1.0 - depth * k_eff * k_eff / (k_eff * k_eff + d * d)
    return out


def synthesize_trace(
    lines: Sequence[DipLine],
    window: ScanWindow,
    *,
    seed: int,
    noise: NoiseModel = NoiseModel(),
    laser: LaserModel = LaserModel(),
    fabry_perot: Optional[FabryPerot] = None,
    absolute_wavelength: float = 800e-9,
    wavelength_uncertainty: float = 1e-13,
    pzt_voltage: float = 0.0,
) -> ScanTrace:
    """
    Forward model of one sweep: dips composed multiplicatively, laser
    lineshape convolved in, linear baseline tilt and additive noise.

    The stored axis is the nominal (assumed linear) sweep; dips and the
    Fabry-Perot marker are evaluated at the true laser frequency.
    Deterministic for a fixed ``seed``.
    """
    if seed is None:
        raise DomainError("a seed is required")
    nominal = window.axis()
    true_axis = laser.true_axis(nominal)
    clean = noiseless_transmission(true_axis, lines, laser.linewidth)
    rng = np.random.default_rng(int(seed) % _U64)
    tilt = noise.drift * rng.standard_normal()
    u = (nominal - nominal[0]) / (nominal[-1] - nominal[0]) - 0.5
    trans = clean * (1.0 + tilt * u)
    if noise.sigma > 0:
        trans = trans + noise.sigma * rng.standard_normal(nominal.size)
    if fabry_perot is not None:
        marker = fabry_perot.transmission(true_axis)
    else:
        marker = np.zeros_like(nominal)
    return ScanTrace(
        frequency_offset=nominal,
        transmission=trans,
        fp_marker=marker,
        absolute_wavelength=absolute_wavelength,
        wavelength_uncertainty=wavelength_uncertainty,
        pzt_voltage=pzt_voltage,
        rng_seed=int(seed) % _U64,
    )


def synthesize_pzt_series(
    scenario: "Scenario",
    voltages: Optional[Sequence[float]] = None,
    *,
    seed: Optional[int] = None,
    jobs: int = 1,
) -> ScanSeries:
    """
    Generate one trace per voltage step at the tuned mode positions.

    Stops at the first voltage whose tuning state overstresses the stems
    (the device breaks there); that voltage is recorded in
    ``failed_at_voltage``. Trace i uses seed ``seed + i``.
    """
    volts = [float(v) for v in (scenario.voltages() if voltages is None else voltages)]
    if len(volts) < 2:
        raise DomainError("a PZT series needs at least 2 voltage steps")
    if np.any(np.diff(volts) <= 0):
        raise DomainError("voltage steps must be strictly increasing")
    base_seed = scenario.seed if seed is None else seed
    if base_seed is None:
        raise DomainError("a seed is required for synthesis")
    window = scenario.scan_window()

    jobs_in = []
    failed = None
    for i, v in enumerate(volts):
        state = scenario.tuning_state(v)
        if state.stem_overstressed:
            failed = v
            log.warning("device failed at %.6g V: %s", v, "; ".join(state.warnings))
            break
        jobs_in.append((i, v, scenario.lines(state)))
    if not jobs_in:
        raise DomainError(f"device already overstressed at the first voltage {volts[0]}")

    def make(item):
        i, v, lines = item
        return synthesize_trace(
            lines,
            window,
            seed=derived_seed(base_seed, i),
            noise=scenario.noise_model(),
            laser=scenario.laser_model(),
            fabry_perot=scenario.fabry_perot_model(),
            absolute_wavelength=scenario.wavelength,
            pzt_voltage=v,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(make, jobs_in))
    else:
        traces = [make(item) for item in jobs_in]
    return ScanSeries(traces=tuple(traces), scenario=scenario.to_dict(), failed_at_voltage=failed)
