"""
Prism coupler by frustrated total internal reflection.

Rates are half-widths in Hz (amplitude decay rates divided by 2 pi), so a
resonance with intrinsic rate kappa0 and coupling rate kappa_c has a loaded
full width 2 (kappa0 + kappa_c).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DomainError

# Contact coupling rate used when none is given: 4x the intrinsic half-width
# of a Q = 1e9 resonance at 800 nm (~187 kHz).
DEFAULT_CONTACT_RATE = 750e3


def critical_angle(refractive_index: float, prism_index: float) -> float:
    """Phase-matching incidence angle arcsin(N / Np) inside the prism [rad]."""
    if not prism_index > refractive_index >= 1.0:
        raise DomainError(
            f"prism index ({prism_index}) must exceed sphere index ({refractive_index}) >= 1"
        )
    return math.asin(refractive_index / prism_index)


@dataclass(frozen=True)
class CouplerConfig:
    """
    Parameters
    ----------
    prism_index : float
        Prism refractive index Np.
    sphere_index : float
        Sphere index N (needed for the phase-matching angle).
    gap : float
        Sphere-prism gap [m].
    decay_length : float
        Evanescent field decay length [m], see
        :func:`wgmbench.sphere.evanescent_decay_length`.
    contact_rate : float
        Coupling half-width at zero gap [Hz].
    incidence_angle : float, optional
        Beam angle in the prism [rad]; ``None`` means phase matched.
    angular_width : float
        1/e^(1/2) width of the Gaussian angular acceptance [rad].
    """

    prism_index: float
    sphere_index: float
    gap: float
    decay_length: float
    contact_rate: float = DEFAULT_CONTACT_RATE
    incidence_angle: Optional[float] = None
    angular_width: float = 0.01

    def __post_init__(self) -> None:
        if not self.prism_index > self.sphere_index:
            raise DomainError("prism_index must exceed sphere_index")
        if self.gap < 0:
            raise DomainError(f"gap must be >= 0, got {self.gap}")
        if not self.decay_length > 0:
            raise DomainError("decay_length must be positive")
        if not self.contact_rate > 0:
            raise DomainError("contact_rate must be positive")
        if not self.angular_width > 0:
            raise DomainError("angular_width must be positive")

    @property
    def matching_angle(self) -> float:
        return critical_angle(self.sphere_index, self.prism_index)

    def with_gap(self, gap: float) -> "CouplerConfig":
        return replace(self, gap=gap)


def angular_acceptance(config: CouplerConfig) -> float:
    if config.incidence_angle is None:
        return 1.0
    detune = (config.incidence_angle - config.matching_angle) / config.angular_width
    return math.exp(-0.5 * detune * detune)


def coupling_rate(config: CouplerConfig) -> float:
    """kappa_c = kappa_c0 exp(-2 gap / Lambda) times the angular acceptance [Hz]."""
    return config.contact_rate * math.exp(-2.0 * config.gap / config.decay_length) * angular_acceptance(config)


def gap_for_rate(config: CouplerConfig, rate: float) -> float:
    """Gap at which the (phase-matched) coupling rate equals ``rate``; may be negative."""
    if not rate > 0:
        raise DomainError("rate must be positive")
    return 0.5 * config.decay_length * math.log(config.contact_rate / rate)


def dip_depth(kappa0, kappa_c):
    """On-resonance fractional dip 4 k0 kc / (k0 + kc)^2."""
    kappa0 = np.asarray(kappa0, dtype=float)
    kappa_c = np.asarray(kappa_c, dtype=float)
    return 4.0 * kappa0 * kappa_c / (kappa0 + kappa_c) ** 2


def steady_state_dip(kappa0: float, kappa_c: float, detuning):
    """
    Reflected intensity of a one-port resonator,
    R = 1 - 4 k0 kc / ((k0 + kc)^2 + delta^2).
    """
    if not kappa0 > 0:
        raise DomainError("kappa0 must be positive")
    if kappa_c < 0:
        raise DomainError("kappa_c must be >= 0")
    delta = np.asarray(detuning, dtype=float)
    k = kappa0 + kappa_c
    return 1.0 - 4.0 * kappa0 * kappa_c / (k * k + delta * delta)


def loaded_q(frequency: float, kappa0: float, kappa_c: float) -> float:
    if not kappa0 > 0:
        raise DomainError("kappa0 must be positive")
    return frequency / (2.0 * (kappa0 + kappa_c))


def rates_from_dip(fwhm: float, depth: float, undercoupled: bool = True) -> tuple[float, float]:
    """
    Invert loaded width and depth into (kappa0, kappa_c).

    A depth D < 1 has an under- and an over-coupled solution, r = kc/k0 and
    1/r; ``undercoupled`` selects r <= 1.
    """
    if not fwhm > 0:
        raise DomainError("fwhm must be positive")
    if not 0 < depth <= 1:
        raise DomainError(f"depth must be in (0, 1], got {depth}")
    s = math.sqrt(1.0 - depth)
    r = (1.0 - s) / (1.0 + s)
    if not undercoupled:
        r = 1.0 / r
    total = 0.5 * fwhm
    kappa0 = total / (1.0 + r)
    return kappa0, total - kappa0
