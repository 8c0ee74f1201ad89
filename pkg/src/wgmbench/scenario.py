"""
Scenario files: one YAML document describing a sphere, its coupler and
stretching device, the modes to follow, the scan window and the noise.

Unknown keys are rejected and every value is checked against the
preconditions of the module that consumes it before anything is computed,
so a bad file fails fast with the offending field named.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from .coupling import DEFAULT_CONTACT_RATE, CouplerConfig, coupling_rate, rates_from_dip
from .errors import ScenarioError, WGMError
from .resonance import MAX_ANGULAR_MOMENTUM, MAX_RADIAL_ORDER, nearest_mode_number, solve_resonance
from .spectra import (
    CouplingKind,
    DipLine,
    FabryPerot,
    LaserModel,
    NoiseModel,
    ScanWindow,
    avoided_crossing,
    doublet_frequencies,
    upper_branch_weight,
)
from .sphere import (
    C_LIGHT,
    Polarization,
    SphereGeometry,
    evanescent_decay_length,
    q_budget,
    q_from_attenuation,
)
from .tuning import DeviceGeometry, TuningParameters, TuningState, frequency_shift, pzt_chain

SCHEMA_VERSION = "1.0"
# widest continuous scan of the laser, in wavelength
MAX_SCAN_WAVELENGTH = 1e-9

PolName = Literal["TE", "TM"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SphereSection(_Section):
    radius: float = Field(gt=0)
    refractive_index: float = Field(gt=1.0)
    surrounding_index: float = Field(default=1.0, ge=1.0)
    ellipticity: float = 0.0
    attenuation_db_per_m: Optional[float] = Field(default=None, gt=0)
    intrinsic_q: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if not self.refractive_index > self.surrounding_index:
            raise ValueError("refractive_index must exceed surrounding_index")
        if not abs(self.ellipticity) < 0.05:
            raise ValueError("|ellipticity| must be < 0.05")
        return self

    def geometry(self) -> SphereGeometry:
        return SphereGeometry(self.radius, self.refractive_index, self.surrounding_index, self.ellipticity)


class CouplerSection(_Section):
    prism_index: float = Field(gt=1.0)
    gap: float = Field(ge=0)
    contact_rate: float = Field(default=DEFAULT_CONTACT_RATE, gt=0)
    incidence_angle: Optional[float] = None
    angular_width: float = Field(default=0.01, gt=0)


class DeviceSection(_Section):
    sphere_diameter: float = Field(gt=0)
    stem_diameter: float = Field(gt=0)
    free_stem_length: float = Field(gt=0)
    pzt_full_travel: float = Field(default=7e-6, gt=0)
    lever_gain: float = Field(default=80.0 / 7.0, gt=0)
    v_max: float = Field(default=150.0, gt=0)
    stem_fracture_strain: float = Field(default=0.01, gt=0)
    sphere_elastic_limit: float = Field(default=0.02, gt=0)
    youngs_modulus: float = Field(default=73e9, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.stem_diameter > self.sphere_diameter:
            raise ValueError("stem_diameter must not exceed sphere_diameter")
        return self

    def geometry(self) -> DeviceGeometry:
        return DeviceGeometry(**self.model_dump())


class RampSection(_Section):
    start: float = Field(default=0.0, ge=0)
    stop: float
    steps: int = Field(ge=2)

    @model_validator(mode="after")
    def _check(self):
        if not self.stop > self.start:
            raise ValueError("stop must exceed start")
        return self


class TuningSection(_Section):
    voltages: Optional[list[float]] = None
    ramp: Optional[RampSection] = None
    temperature_offset: float = 0.0
    geometric_coefficient: float = Field(default=0.17, gt=0)
    geometric_fraction: float = Field(default=0.8, gt=0, le=1)
    birefringence_ratio: float = Field(default=1.3, gt=0)
    temperature_coefficient: float = -2.5e9

    @model_validator(mode="after")
    def _check(self):
        if self.voltages is not None and self.ramp is not None:
            raise ValueError("give either voltages or ramp, not both")
        if self.voltages is not None:
            v = np.asarray(self.voltages, dtype=float)
            if v.size == 0 or np.any(~np.isfinite(v)) or np.any(np.diff(v) <= 0):
                raise ValueError("voltages must be a non-empty, strictly increasing list")
        if not abs(self.temperature_offset) < 50.0:
            raise ValueError("|temperature_offset| must be < 50 K")
        return self

    def parameters(self) -> TuningParameters:
        return TuningParameters(
            geometric_coefficient=self.geometric_coefficient,
            geometric_fraction=self.geometric_fraction,
            birefringence_ratio=self.birefringence_ratio,
            temperature_coefficient=self.temperature_coefficient,
        )

    def voltage_list(self) -> list[float]:
        if self.voltages is not None:
            return [float(v) for v in self.voltages]
        if self.ramp is not None:
            return [float(v) for v in np.linspace(self.ramp.start, self.ramp.stop, self.ramp.steps)]
        return [0.0]


class _LossFields(_Section):
    """Ways to give a line its rates; the first complete one wins."""

    fwhm: Optional[float] = Field(default=None, gt=0)
    depth: Optional[float] = Field(default=None, gt=0, le=1)
    overcoupled: bool = False
    kappa0: Optional[float] = Field(default=None, gt=0)
    kappa_c: Optional[float] = Field(default=None, ge=0)
    intrinsic_q: Optional[float] = Field(default=None, gt=0)
    coupling_ratio: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_loss(self):
        if (self.fwhm is None) != (self.depth is None):
            raise ValueError("fwhm and depth must be given together")
        if self.fwhm is not None and any(
            v is not None for v in (self.kappa0, self.kappa_c, self.intrinsic_q, self.coupling_ratio)
        ):
            raise ValueError("fwhm/depth cannot be combined with kappa0, kappa_c, intrinsic_q or coupling_ratio")
        if self.kappa0 is not None and self.intrinsic_q is not None:
            raise ValueError("give kappa0 or intrinsic_q, not both")
        if self.kappa_c is not None and self.coupling_ratio is not None:
            raise ValueError("give kappa_c or coupling_ratio, not both")
        return self


class ModeSection(_LossFields):
    label: str = Field(min_length=1)
    polarization: PolName = "TE"
    offset: Optional[float] = None
    n: int = Field(default=1, ge=1)
    l: Optional[int] = Field(default=None, ge=1)
    m: Optional[int] = None

    @model_validator(mode="after")
    def _check_mode(self):
        if self.n > MAX_RADIAL_ORDER:
            raise ValueError(f"n must be <= {MAX_RADIAL_ORDER}")
        if self.l is not None and self.l > MAX_ANGULAR_MOMENTUM:
            raise ValueError(f"l must be <= {MAX_ANGULAR_MOMENTUM}")
        if self.m is not None and (self.l is None or abs(self.m) > self.l):
            raise ValueError("m needs l and |m| <= l")
        return self


class CombSection(_LossFields):
    """A quasi-regular ladder of modes filling an offset range."""

    start: float
    stop: float
    spacing: float = Field(gt=0)
    jitter: float = Field(default=0.0, ge=0, lt=0.5)
    polarizations: list[PolName] = Field(default_factory=lambda: ["TE", "TM"], min_length=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_range(self):
        if not self.stop > self.start:
            raise ValueError("stop must exceed start")
        if (self.stop - self.start) / self.spacing > 100_000:
            raise ValueError("comb has more than 100000 modes")
        return self


class CouplingSection(_Section):
    kind: Literal["backscatter", "polarization"]
    g: float = Field(ge=0)
    mode_a: str
    mode_b: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "polarization" and self.mode_b is None:
            raise ValueError("polarization coupling needs mode_b")
        if self.kind == "backscatter" and self.mode_b is not None:
            raise ValueError("backscatter coupling takes only mode_a")
        return self


class WindowSection(_Section):
    start: float
    stop: float
    samples: int = Field(ge=100)

    @model_validator(mode="after")
    def _check(self):
        if not self.stop > self.start:
            raise ValueError("window width must be positive")
        return self


class LaserSection(_Section):
    linewidth: float = Field(default=1e6, ge=0)
    sweep_nonlinearity: float = Field(default=0.0, gt=-0.25, lt=0.25)
    wavelength_uncertainty: float = Field(default=1e-13, ge=0)


class FabryPerotSection(_Section):
    fsr: float = Field(gt=0)
    finesse: float = Field(default=50.0, gt=0)
    phase: float = 0.0


class NoiseSection(_Section):
    sigma: float = Field(default=0.01, ge=0)
    drift: float = Field(default=0.0, ge=0)


class SolveSection(_Section):
    radial_orders: int = Field(default=1, ge=1, le=MAX_RADIAL_ORDER)
    polarizations: list[PolName] = Field(default_factory=lambda: ["TE", "TM"], min_length=1)
    l_values: Optional[list[int]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.l_values is not None and any(not 1 <= l <= MAX_ANGULAR_MOMENTUM for l in self.l_values):
            raise ValueError(f"l_values must lie in 1..{MAX_ANGULAR_MOMENTUM}")
        return self


@dataclass(frozen=True)
class BareMode:
    """A mode before tuning: absolute frequency and rates [Hz]."""

    label: str
    polarization: Polarization
    frequency: float
    kappa0: float
    kappa_c: float


class Scenario(_Section):
    schema_version: str = SCHEMA_VERSION
    name: str = "scenario"
    description: str = ""
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    wavelength: float = Field(gt=0)
    sphere: SphereSection
    coupler: Optional[CouplerSection] = None
    device: Optional[DeviceSection] = None
    tuning: TuningSection = Field(default_factory=TuningSection)
    modes: list[ModeSection] = Field(default_factory=list)
    comb: Optional[CombSection] = None
    couplings: list[CouplingSection] = Field(default_factory=list)
    window: Optional[WindowSection] = None
    laser: LaserSection = Field(default_factory=LaserSection)
    fabry_perot: Optional[FabryPerotSection] = None
    noise: NoiseSection = Field(default_factory=NoiseSection)
    solve: SolveSection = Field(default_factory=SolveSection)

    _bare: Optional[list[BareMode]] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _cross_check(self):
        major = self.schema_version.split(".")[0]
        if major != SCHEMA_VERSION.split(".")[0]:
            raise ValueError(f"schema_version: unsupported version {self.schema_version!r}")
        try:
            self.sphere.geometry()
            if self.coupler is not None:
                self.coupler_config()
            device = self.device.geometry() if self.device is not None else None
            self.tuning.parameters()
        except WGMError as exc:
            raise ValueError(str(exc)) from None
        volts = self.tuning.voltage_list()
        if device is None:
            if volts != [0.0]:
                raise ValueError("tuning: a voltage ramp needs a device section")
        elif volts[0] < 0 or volts[-1] > device.v_max:
            raise ValueError(f"tuning: voltages must lie in [0, {device.v_max}]")
        if self.window is not None:
            max_span = C_LIGHT * MAX_SCAN_WAVELENGTH / self.wavelength**2
            if self.window.stop - self.window.start > max_span:
                raise ValueError(
                    f"window: width exceeds the continuous scan range of the laser ({max_span:.4g} Hz)"
                )
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise ValueError("modes: labels must be unique")
        pols = {m.label: m.polarization for m in self.modes}
        used: set[str] = set()
        for i, c in enumerate(self.couplings):
            refs = [c.mode_a] + ([c.mode_b] if c.mode_b else [])
            for r in refs:
                if r not in pols:
                    raise ValueError(f"couplings.{i}: unknown mode {r!r}")
                if r in used:
                    raise ValueError(f"couplings.{i}: mode {r!r} already coupled")
                used.add(r)
            if c.kind == "polarization" and pols[c.mode_a] == pols[c.mode_b]:
                raise ValueError(f"couplings.{i}: polarization coupling needs one TE and one TM mode")
        for i, m in enumerate(self.modes):
            self._check_loss(m, f"modes.{i}")
        if self.comb is not None:
            self._check_loss(self.comb, "comb")
        return self

    def _check_loss(self, spec: _LossFields, where: str) -> None:
        if spec.fwhm is not None:
            return
        has_k0 = spec.kappa0 is not None or spec.intrinsic_q is not None or self.sphere.intrinsic_q is not None \
            or self.sphere.attenuation_db_per_m is not None
        if not has_k0:
            raise ValueError(f"{where}: no intrinsic loss given (fwhm/depth, kappa0, intrinsic_q or sphere loss)")
        has_kc = spec.kappa_c is not None or spec.coupling_ratio is not None or self.coupler is not None
        if not has_kc:
            raise ValueError(f"{where}: no coupling rate given (fwhm/depth, kappa_c, coupling_ratio or coupler)")

    # construction ---------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Any) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a mapping")
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            err = exc.errors()[0]
            loc = ".".join(str(p) for p in err["loc"])
            msg = err["msg"].removeprefix("Value error, ")
            raise ScenarioError(f"{loc}: {msg}" if loc else msg) from None

    @classmethod
    def from_yaml(cls, text: str) -> "Scenario":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"invalid YAML: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def from_file(cls, path) -> "Scenario":
        return cls.from_yaml(Path(path).read_text(encoding="utf-8"))

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump(mode="json", exclude_none=True)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def with_updates(self, **changes: Any) -> "Scenario":
        data = self.to_dict()
        data.update(changes)
        return Scenario.from_dict(data)

    # derived objects --------------------------------------------------------

    @property
    def reference_frequency(self) -> float:
        return C_LIGHT / self.wavelength

    def geometry(self) -> SphereGeometry:
        return self.sphere.geometry()

    def coupler_config(self) -> Optional[CouplerConfig]:
        if self.coupler is None:
            return None
        c = self.coupler
        return CouplerConfig(
            prism_index=c.prism_index,
            sphere_index=self.sphere.refractive_index,
            gap=c.gap,
            decay_length=evanescent_decay_length(self.sphere.refractive_index, self.wavelength,
                                                 self.sphere.surrounding_index),
            contact_rate=c.contact_rate,
            incidence_angle=c.incidence_angle,
            angular_width=c.angular_width,
        )

    def tuning_parameters(self) -> TuningParameters:
        return self.tuning.parameters()

    def voltages(self) -> list[float]:
        return self.tuning.voltage_list()

    def scan_window(self) -> ScanWindow:
        if self.window is None:
            raise ScenarioError("window: required for synthesis")
        return ScanWindow(self.window.start, self.window.stop, self.window.samples)

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.noise.sigma, self.noise.drift)

    def laser_model(self) -> LaserModel:
        return LaserModel(self.laser.linewidth, self.laser.sweep_nonlinearity)

    def fabry_perot_model(self) -> Optional[FabryPerot]:
        fp = self.fabry_perot
        return None if fp is None else FabryPerot(fp.fsr, fp.finesse, fp.phase)

    def material_q(self) -> Optional[float]:
        """Intrinsic Q from the sphere section (bulk absorption and/or a fixed Q), if any."""
        nu = self.reference_frequency
        qs = []
        if self.sphere.attenuation_db_per_m is not None:
            qs.append(q_from_attenuation(self.sphere.refractive_index, self.sphere.attenuation_db_per_m,
                                         self.wavelength))
        if self.sphere.intrinsic_q is not None:
            qs.append(self.sphere.intrinsic_q)
        return q_budget(nu, *qs) if qs else None

    def tuning_state(self, voltage: float) -> TuningState:
        if self.device is None:
            if voltage != 0.0:
                raise ScenarioError("tuning: a nonzero voltage needs a device section")
            return TuningState(0.0, self.tuning.temperature_offset, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        return pzt_chain(self.device.geometry(), voltage, self.tuning.temperature_offset,
                         self.tuning_parameters())

    def _rates(self, spec: _LossFields, frequency: float) -> tuple[float, float]:
        if spec.fwhm is not None:
            return rates_from_dip(spec.fwhm, spec.depth, undercoupled=not spec.overcoupled)
        if spec.kappa0 is not None:
            k0 = spec.kappa0
        else:
            q = spec.intrinsic_q if spec.intrinsic_q is not None else self.material_q()
            k0 = frequency / (2.0 * q)
        if spec.kappa_c is not None:
            kc = spec.kappa_c
        elif spec.coupling_ratio is not None:
            kc = spec.coupling_ratio * k0
        else:
            kc = coupling_rate(self.coupler_config())
        return k0, kc

    def bare_modes(self) -> list[BareMode]:
        """All modes at zero tuning, solving the characteristic equation where asked."""
        if self._bare is not None:
            return list(self._bare)
        nu_ref = self.reference_frequency
        out = []
        for spec in self.modes:
            pol = Polarization(spec.polarization)
            if spec.offset is not None:
                nu = nu_ref + spec.offset
            else:
                geom = self.geometry()
                l = spec.l if spec.l is not None else nearest_mode_number(geom, pol, spec.n, nu_ref)
                nu = solve_resonance(geom, pol, spec.n, l, spec.m).frequency
            k0, kc = self._rates(spec, nu)
            out.append(BareMode(spec.label, pol, nu, k0, kc))
        if self.comb is not None:
            c = self.comb
            count = int(math.floor((c.stop - c.start) / c.spacing)) + 1
            rng = np.random.default_rng(c.seed)
            jitter = c.jitter * c.spacing * rng.uniform(-1.0, 1.0, count)
            for k in range(count):
                pol = Polarization(c.polarizations[k % len(c.polarizations)])
                nu = nu_ref + c.start + k * c.spacing + jitter[k]
                k0, kc = self._rates(c, nu)
                out.append(BareMode(f"comb{k:04d}{pol.value}", pol, nu, k0, kc))
        self._bare = out
        return list(out)

    def tuned_frequencies(self, state: TuningState) -> dict[str, float]:
        params = self.tuning_parameters()
        return {
            b.label: b.frequency + frequency_shift(b.frequency, b.polarization, state, params)
            for b in self.bare_modes()
        }

    def lines(self, state: TuningState) -> list[DipLine]:
        """Dip lines (offsets from the reference frequency) in ``state``, couplings applied."""
        nu_ref = self.reference_frequency
        modes = {b.label: b for b in self.bare_modes()}
        tuned = self.tuned_frequencies(state)
        lines: list[DipLine] = []
        done: set[str] = set()
        for c in self.couplings:
            a = modes[c.mode_a]
            if CouplingKind(c.kind) is CouplingKind.BACKSCATTER:
                lo, hi = doublet_frequencies(tuned[a.label], c.g)
                lines.append(DipLine(lo - nu_ref, a.kappa0, a.kappa_c, a.label + "-"))
                lines.append(DipLine(hi - nu_ref, a.kappa0, a.kappa_c, a.label + "+"))
                done.add(a.label)
            else:
                b = modes[c.mode_b]
                lo, hi = avoided_crossing(tuned[a.label], tuned[b.label], c.g)
                w = float(upper_branch_weight(tuned[a.label], tuned[b.label], c.g))
                for freq, wa, tag in ((float(hi), w, "upper"), (float(lo), 1.0 - w, "lower")):
                    lines.append(DipLine(
                        freq - nu_ref,
                        wa * a.kappa0 + (1 - wa) * b.kappa0,
                        wa * a.kappa_c + (1 - wa) * b.kappa_c,
                        f"{a.label}/{b.label}:{tag}",
                    ))
                done.update((a.label, b.label))
        for label, b in modes.items():
            if label not in done:
                lines.append(DipLine(tuned[label] - nu_ref, b.kappa0, b.kappa_c, label))
        lines.sort(key=lambda ln: ln.center)
        return lines


def load_scenario(path) -> Scenario:
    return Scenario.from_file(path)


def builtin_scenario_path(name: str) -> Path:
    path = Path(__file__).parent / "scenarios" / f"{name}.yaml"
    if not path.exists():
        raise ScenarioError(f"no built-in scenario named {name!r}")
    return path


def builtin_scenario(name: str) -> Scenario:
    return Scenario.from_file(builtin_scenario_path(name))
