"""
Strain and temperature tuning of a double-stemmed microsphere.

The PZT elongation is shared between the two stems and the sphere, treated
as springs in series with stiffness E A / L. The sphere's axial strain
contracts its equator by an effective geometric coefficient, which raises
every mode frequency; stress birefringence adds a polarization-dependent
index term so that TM modes tune faster than TE modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError
from .sphere import ModeResonance, Polarization

SILICA_YOUNGS_MODULUS = 73e9  # Pa


def fractional_shift(strain: float, index_change: float) -> float:
    """First-order relative frequency change, d(nu)/nu = -(da/a) - (dN/N)."""
    if not abs(strain) < 0.05:
        raise DomainError(f"|strain| must be < 0.05, got {strain}")
    return -(strain + index_change)


def temperature_shift(delta_t: float, coefficient: float = -2.5e9) -> float:
    """Uniform thermal shift [Hz] for a temperature offset [K]; coefficient in Hz/K."""
    if not abs(delta_t) < 50.0:
        raise DomainError(f"|delta_t| must be < 50 K, got {delta_t}")
    return coefficient * delta_t


def strain_for_one_fsr(l: int) -> float:
    """Equatorial strain that moves a mode by one free spectral range (~1/l)."""
    if l < 1:
        raise DomainError(f"l must be >= 1, got {l}")
    return 1.0 / l


@dataclass(frozen=True)
class DeviceGeometry:
    """
    Stretching device holding a sphere between two stems.

    ``free_stem_length`` is the total unsupported stem length (both stems).
    The PZT displacement is ``pzt_full_travel`` at ``v_max`` and is
    amplified by ``lever_gain`` before reaching the stems.
    """

    sphere_diameter: float
    stem_diameter: float
    free_stem_length: float
    pzt_full_travel: float = 7e-6
    lever_gain: float = 80.0 / 7.0
    v_max: float = 150.0
    stem_fracture_strain: float = 0.01
    sphere_elastic_limit: float = 0.02
    youngs_modulus: float = SILICA_YOUNGS_MODULUS

    def __post_init__(self) -> None:
        for name in ("sphere_diameter", "stem_diameter", "free_stem_length",
                     "pzt_full_travel", "lever_gain", "v_max",
                     "stem_fracture_strain", "sphere_elastic_limit", "youngs_modulus"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.stem_diameter > self.sphere_diameter:
            raise DomainError("stem_diameter must not exceed sphere_diameter")

    @property
    def area_ratio(self) -> float:
        """Sphere-to-stem cross-section ratio; equals the stem/sphere stress ratio."""
        return (self.sphere_diameter / self.stem_diameter) ** 2

    @property
    def max_elongation(self) -> float:
        return self.pzt_full_travel * self.lever_gain

    def elongation(self, voltage: float) -> float:
        return voltage / self.v_max * self.max_elongation

    def stem_strain_per_elongation(self) -> float:
        # springs in series: same force, strain = F / (E A)
        return 1.0 / (self.free_stem_length + self.sphere_diameter / self.area_ratio)

    def voltage_at_stem_limit(self) -> float:
        """PZT voltage at which the stems reach their fracture strain."""
        elong = self.stem_fracture_strain / self.stem_strain_per_elongation()
        return elong / self.max_elongation * self.v_max


@dataclass(frozen=True)
class TuningParameters:
    """
    Material response of the sphere.

    geometric_coefficient : equatorial contraction per unit axial strain.
    geometric_fraction : share of the TE tuning rate that is geometric; the
        rest is stress-induced index change.
    birefringence_ratio : TM/TE tuning-rate ratio.
    temperature_coefficient : Hz/K, applied uniformly.
    """

    geometric_coefficient: float = 0.17
    geometric_fraction: float = 0.8
    birefringence_ratio: float = 1.3
    temperature_coefficient: float = -2.5e9

    def __post_init__(self) -> None:
        if not self.geometric_coefficient > 0:
            raise DomainError("geometric_coefficient must be positive")
        if not 0 < self.geometric_fraction <= 1:
            raise DomainError("geometric_fraction must be in (0, 1]")
        if not self.birefringence_ratio > 0:
            raise DomainError("birefringence_ratio must be positive")

    def rate_factor(self, polarization: Polarization) -> float:
        """Total fractional tuning per unit geometric term for ``polarization``."""
        base = 1.0 / self.geometric_fraction
        if Polarization(polarization) is Polarization.TM:
            return base * self.birefringence_ratio
        return base


@dataclass(frozen=True)
class TuningState:
    pzt_voltage: float
    temperature_offset: float
    stem_elongation: float
    stem_strain: float
    sphere_axial_strain: float
    equatorial_strain: float
    stem_stress: float
    sphere_stress: float
    warnings: tuple[str, ...] = field(default=())

    @property
    def stem_overstressed(self) -> bool:
        return any(w.startswith("stem") for w in self.warnings)

    @property
    def stress_ratio(self) -> float:
        return self.stem_stress / self.sphere_stress if self.sphere_stress else math.nan


def pzt_chain(
    device: DeviceGeometry,
    voltage: float,
    temperature_offset: float = 0.0,
    params: TuningParameters = TuningParameters(),
) -> TuningState:
    """Propagate a PZT voltage through elongation, stem/sphere strain and equatorial strain."""
    if not 0.0 <= voltage <= device.v_max:
        raise DomainError(f"voltage must be in [0, {device.v_max}], got {voltage}")
    elong = device.elongation(voltage)
    stem_strain = elong * device.stem_strain_per_elongation()
    sphere_strain = stem_strain / device.area_ratio
    equatorial = -params.geometric_coefficient * sphere_strain
    e = device.youngs_modulus
    warnings = []
    if stem_strain > device.stem_fracture_strain:
        warnings.append(
            f"stem strain {stem_strain:.4g} exceeds fracture strain {device.stem_fracture_strain:.4g}"
        )
    if sphere_strain > device.sphere_elastic_limit:
        warnings.append(
            f"sphere strain {sphere_strain:.4g} exceeds elastic limit {device.sphere_elastic_limit:.4g}"
        )
    return TuningState(
        pzt_voltage=voltage,
        temperature_offset=temperature_offset,
        stem_elongation=elong,
        stem_strain=stem_strain,
        sphere_axial_strain=sphere_strain,
        equatorial_strain=equatorial,
        stem_stress=e * stem_strain,
        sphere_stress=e * sphere_strain,
        warnings=tuple(warnings),
    )


def fractional_rate(state: TuningState, polarization: Polarization, params: TuningParameters) -> float:
    """Strain part of d(nu)/nu for a mode of given polarization."""
    geometric = -state.equatorial_strain
    total = geometric * params.rate_factor(polarization)
    # split into the geometric and photoelastic terms of d(nu)/nu = -da/a - dN/N
    index_change = -(total - geometric)
    return fractional_shift(state.equatorial_strain, index_change)


def frequency_shift(
    frequency: float, polarization: Polarization, state: TuningState, params: TuningParameters = TuningParameters()
) -> float:
    """Absolute shift [Hz] of a resonance at ``frequency`` in ``state``."""
    thermal = temperature_shift(state.temperature_offset, params.temperature_coefficient)
    return frequency * fractional_rate(state, polarization, params) + thermal


def mode_shift(resonance: ModeResonance, state: TuningState, params: TuningParameters = TuningParameters()) -> float:
    """Tuned frequency of ``resonance`` in ``state`` [Hz]."""
    return resonance.frequency + frequency_shift(
        resonance.frequency, resonance.mode.polarization, state, params
    )
