"""
Static mode structure of a dielectric microsphere.

Closed-form relations for whispering-gallery modes (WGMs): size parameter,
maximum angular momentum, free spectral range, Q / attenuation / linewidth
conversions, photon lifetime, evanescent decay length and a ring-shaped
mode-volume estimate. The exact resonance positions come from
:mod:`wgmbench.resonance`.

All quantities are SI (m, Hz, s) unless a name says otherwise; attenuation
is in dB/m because that is how fibre and bulk losses are quoted.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

from scipy import special

from .errors import CapabilityError, DomainError

C_LIGHT = 299_792_458.0  # m/s

# dB -> nepers conversion in the Q(alpha) relation; 0.23 ~ ln(10)/10
_DB_FACTOR = 0.23


class Polarization(str, enum.Enum):
    TE = "TE"
    TM = "TM"


@dataclass(frozen=True)
class SphereGeometry:
    """
    Silica-like microsphere.

    Parameters
    ----------
    radius : float
        Sphere radius a [m].
    refractive_index : float
        Index N of the sphere material.
    surrounding_index : float
        Index of the medium outside the sphere (1.0 for vacuum/air).
    ellipticity : float
        Fractional polar-minus-equatorial radius difference; small
        perturbation only.
    """

    radius: float
    refractive_index: float
    surrounding_index: float = 1.0
    ellipticity: float = 0.0

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise DomainError(f"radius must be positive, got {self.radius}")
        if not self.surrounding_index > 0:
            raise DomainError(f"surrounding_index must be positive, got {self.surrounding_index}")
        if not self.refractive_index > self.surrounding_index:
            raise DomainError(
                f"refractive_index ({self.refractive_index}) must exceed "
                f"surrounding_index ({self.surrounding_index})"
            )
        if not abs(self.ellipticity) < 0.05:
            raise DomainError(f"|ellipticity| must be < 0.05, got {self.ellipticity}")

    @property
    def relative_index(self) -> float:
        return self.refractive_index / self.surrounding_index

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def scaled(self, factor: float) -> "SphereGeometry":
        return replace(self, radius=self.radius * factor)


@dataclass(frozen=True)
class ModeId:
    """Quantum numbers (n, l, m) plus polarization of a WGM."""

    n: int
    l: int
    m: Optional[int] = None
    polarization: Polarization = Polarization.TE

    def __post_init__(self) -> None:
        object.__setattr__(self, "polarization", Polarization(self.polarization))
        if self.m is None:
            object.__setattr__(self, "m", self.l)
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if self.l < 1:
            raise DomainError(f"l must be >= 1, got {self.l}")
        if abs(self.m) > self.l:
            raise DomainError(f"|m| must be <= l, got m={self.m}, l={self.l}")

    @property
    def is_fundamental(self) -> bool:
        return self.n == 1 and abs(self.m) == self.l

    def label(self) -> str:
        return f"{self.polarization.value}(n={self.n},l={self.l},m={self.m})"


@dataclass(frozen=True)
class ModeResonance:
    """
    A resonance of one mode. The linewidth (and hence Q) is optional until a
    loss budget has been applied with :meth:`with_q` or :meth:`with_linewidth`.
    """

    mode: ModeId
    frequency: float
    intrinsic_linewidth: Optional[float] = None
    size_parameter: Optional[float] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.frequency > 0:
            raise DomainError(f"frequency must be positive, got {self.frequency}")
        if self.intrinsic_linewidth is not None and not self.intrinsic_linewidth > 0:
            raise DomainError("intrinsic_linewidth must be positive")

    @property
    def vacuum_wavelength(self) -> float:
        return C_LIGHT / self.frequency

    @property
    def intrinsic_q(self) -> Optional[float]:
        if self.intrinsic_linewidth is None:
            return None
        return self.frequency / self.intrinsic_linewidth

    def with_linewidth(self, linewidth: float) -> "ModeResonance":
        return replace(self, intrinsic_linewidth=linewidth)

    def with_q(self, q: float) -> "ModeResonance":
        if not q > 0:
            raise DomainError(f"Q must be positive, got {q}")
        return replace(self, intrinsic_linewidth=self.frequency / q)

    def shifted(self, delta_frequency: float) -> "ModeResonance":
        return replace(self, frequency=self.frequency + delta_frequency)


def _check_wavelength(wavelength: float) -> None:
    if not wavelength > 0:
        raise DomainError(f"wavelength must be positive, got {wavelength}")


def size_parameter(geometry: SphereGeometry, wavelength: float) -> float:
    """Vacuum size parameter x = k a = 2 pi a / lambda."""
    _check_wavelength(wavelength)
    return 2.0 * math.pi * geometry.radius / wavelength


def max_angular_momentum(geometry: SphereGeometry, wavelength: float) -> int:
    """Angular momentum of the outermost (n=1) mode, l ~ N x, rounded half-up."""
    nx = geometry.refractive_index * size_parameter(geometry, wavelength)
    return max(1, int(math.floor(nx + 0.5)))


def free_spectral_range(geometry: SphereGeometry, wavelength: float) -> float:
    """
    Spacing of consecutive-l resonances near ``wavelength`` [Hz].

    Equals nu / l with l = N x, i.e. c / (2 pi N a) up to the rounding of l.
    """
    l = max_angular_momentum(geometry, wavelength)
    return C_LIGHT / (wavelength * l)


def q_from_attenuation(refractive_index: float, attenuation_db_per_m: float, wavelength: float) -> float:
    """Q limited by a bulk attenuation alpha [dB/m]: Q = 2 pi N / (0.23 alpha lambda)."""
    if not attenuation_db_per_m > 0:
        raise DomainError(f"attenuation must be positive, got {attenuation_db_per_m}")
    _check_wavelength(wavelength)
    return 2.0 * math.pi * refractive_index / (_DB_FACTOR * attenuation_db_per_m * wavelength)


def attenuation_from_q(refractive_index: float, q: float, wavelength: float) -> float:
    """Inverse of :func:`q_from_attenuation`, returns dB/m."""
    if not q > 0:
        raise DomainError(f"Q must be positive, got {q}")
    _check_wavelength(wavelength)
    return 2.0 * math.pi * refractive_index / (_DB_FACTOR * q * wavelength)


def q_from_linewidth(frequency: float, linewidth: float) -> float:
    if not linewidth > 0:
        raise DomainError(f"linewidth must be positive, got {linewidth}")
    return frequency / linewidth


def linewidth_from_q(frequency: float, q: float) -> float:
    if not q > 0:
        raise DomainError(f"Q must be positive, got {q}")
    return frequency / q


def photon_lifetime(q: float, frequency: float) -> float:
    """Energy storage time tau = Q / (2 pi nu) [s]."""
    if not q > 0 or not frequency > 0:
        raise DomainError("Q and frequency must be positive")
    return q / (2.0 * math.pi * frequency)


def evanescent_decay_length(refractive_index: float, wavelength: float, surrounding_index: float = 1.0) -> float:
    """1/e field decay length outside the surface for grazing WGM light [m]."""
    if not refractive_index > surrounding_index:
        raise DomainError(
            f"refractive_index must exceed surrounding index {surrounding_index}, got {refractive_index}"
        )
    _check_wavelength(wavelength)
    return wavelength / (2.0 * math.pi * math.sqrt(refractive_index**2 - surrounding_index**2))


def q_budget(frequency: float, *channel_qs: Optional[float]) -> float:
    """
    Combine independent loss channels, 1/Q = sum 1/Q_i.

    ``None`` channels are treated as lossless (e.g. radiative loss of
    spheres larger than ~20 um).
    """
    inv = 0.0
    for q in channel_qs:
        if q is None:
            continue
        if not q > 0:
            raise DomainError(f"channel Q must be positive, got {q}")
        inv += 1.0 / q
    if inv == 0.0:
        raise DomainError("at least one finite loss channel is required")
    return 1.0 / inv


@lru_cache(maxsize=None)
def _airy_radial_width_factor() -> float:
    # effective width  int |Ai|^2 / max |Ai|^2  of the first Airy lobe, in units
    # of the radial Airy scale; int_{a1}^inf Ai^2 = Ai'(a1)^2
    a1, a1p, _, aip_at_a1 = special.ai_zeros(1)
    ai_at_a1p = special.airy(a1p[0])[0]
    return float(aip_at_a1[0] ** 2 / ai_at_a1p**2)


def mode_volume_estimate(geometry: SphereGeometry, mode: ModeId) -> float:
    """
    Ring-shaped mode volume V ~ 2 pi a * w_r * w_theta [m^3] of a fundamental mode.

    The radial width is the effective width of the first Airy lobe with
    scale a (nu/2)^(1/3) / nu, nu = l + 1/2; the polar width is the
    effective width a sqrt(pi / l) of the sin^l(theta) profile.
    """
    if not mode.is_fundamental:
        raise CapabilityError(f"mode volume only estimated for n=1, |m|=l modes, got {mode.label()}")
    a = geometry.radius
    nu = mode.l + 0.5
    radial_scale = a * (nu / 2.0) ** (1.0 / 3.0) / nu
    w_r = _airy_radial_width_factor() * radial_scale
    w_theta = a * math.sqrt(math.pi / mode.l)
    return 2.0 * math.pi * a * w_r * w_theta
