"""
Whispering-gallery resonance positions from the dielectric-sphere
characteristic equation.

Matching an interior spherical Bessel field to an exterior outgoing Hankel
field at r = a gives, with m the relative index and x the size parameter in
the surrounding medium,

    m * P * psi_l'(m x) / psi_l(m x) = chi_l'(x) / chi_l(x),

where P = 1 for TE and P = 1/m^2 for TM. The exterior function is the
Neumann part of the outgoing Hankel function only, which neglects the
(tiny) radiative width and keeps the roots real.

Roots are found by scanning a bracket just above the centrifugal edge
x ~ l/m and bisecting every sign change; sign changes across poles of the
log-derivatives are discarded by their residual.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Optional

import numpy as np

from .bessel import chi_log_derivative, psi_log_derivative
from .errors import CapabilityError, DomainError, SolverError
from .sphere import C_LIGHT, ModeId, ModeResonance, Polarization, SphereGeometry

log = logging.getLogger(__name__)

MAX_RADIAL_ORDER = 5
MAX_ANGULAR_MOMENTUM = 2000
SCAN_POINTS = 10_000

# a sign change is a genuine root only if the relative residual there is tiny;
# poles give O(1) or larger values
_POLE_REJECT = 1e-6


def _polarization_factor(polarization: Polarization, m: float) -> float:
    return 1.0 if Polarization(polarization) is Polarization.TE else 1.0 / m**2


def characteristic_terms(x, l: int, relative_index: float, polarization: Polarization):
    """Return (interior, exterior) log-derivative terms; a resonance has them equal."""
    x = np.asarray(x, dtype=float)
    m = relative_index
    p = _polarization_factor(polarization, m)
    inner = m * p * psi_log_derivative(l, m * x)
    outer = chi_log_derivative(l, x)
    return inner, outer


def characteristic_residual(x, l: int, relative_index: float, polarization: Polarization) -> np.ndarray:
    """Relative mismatch (inner - outer) / (|inner| + |outer|) of the characteristic equation."""
    inner, outer = characteristic_terms(x, l, relative_index, polarization)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (inner - outer) / (np.abs(inner) + np.abs(outer))


def search_bracket(l: int, relative_index: float) -> tuple[float, float]:
    """Size-parameter interval (in the surrounding medium) holding the n <= 5 roots."""
    lo = max(l / relative_index - 5.0, 1e-3)
    hi = l / relative_index + 6.0 * l ** (1.0 / 3.0)
    return lo, hi


def _bisect_all(lo: np.ndarray, hi: np.ndarray, f_lo: np.ndarray, func, iterations: int = 200):
    lo = lo.copy()
    hi = hi.copy()
    f_lo = f_lo.copy()
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        done = (mid <= lo) | (mid >= hi)
        if np.all(done):
            break
        f_mid = func(mid)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left & ~done, mid, lo)
        f_lo = np.where(left & ~done, f_mid, f_lo)
        hi = np.where(~left & ~done, mid, hi)
    return lo, hi


def find_roots(
    l: int,
    relative_index: float,
    polarization: Polarization,
    bracket: Optional[tuple[float, float]] = None,
    points: int = SCAN_POINTS,
) -> np.ndarray:
    """All roots of the characteristic equation in ``bracket``, ascending in x."""
    lo, hi = bracket if bracket is not None else search_bracket(l, relative_index)
    grid = np.linspace(lo, hi, points)

    def func(x):
        inner, outer = characteristic_terms(x, l, relative_index, polarization)
        return inner - outer

    values = func(grid)
    finite = np.isfinite(values)
    change = finite[:-1] & finite[1:] & (np.sign(values[:-1]) * np.sign(values[1:]) < 0)
    idx = np.nonzero(change)[0]
    if idx.size == 0:
        return np.empty(0)
    a, b = _bisect_all(grid[idx], grid[idx + 1], values[idx], func)
    # take whichever end has the smaller residual
    ra = np.abs(characteristic_residual(a, l, relative_index, polarization))
    rb = np.abs(characteristic_residual(b, l, relative_index, polarization))
    x = np.where(ra <= rb, a, b)
    res = np.minimum(ra, rb)
    return x[res < _POLE_REJECT]


def solve_size_parameter(
    l: int, n: int, relative_index: float, polarization: Polarization = Polarization.TE
) -> float:
    """Size parameter (surrounding medium) of the n-th radial root at angular momentum l."""
    if not 1 <= n <= MAX_RADIAL_ORDER:
        raise CapabilityError(f"radial order n={n} outside supported range 1..{MAX_RADIAL_ORDER}")
    if l < 1:
        raise DomainError(f"l must be >= 1, got {l}")
    if l > MAX_ANGULAR_MOMENTUM:
        raise CapabilityError(f"l={l} exceeds supported maximum {MAX_ANGULAR_MOMENTUM}")
    roots = find_roots(l, relative_index, polarization)
    if roots.size < n:
        raise SolverError(
            f"no root for (n={n}, l={l}, {Polarization(polarization).value}) in search bracket "
            f"{search_bracket(l, relative_index)}; found {roots.size} roots"
        )
    return float(roots[n - 1])


def ellipticity_shift(frequency: float, ellipticity: float, l: int, m: int) -> float:
    """First-order frequency offset of the |m| sublevel of a slightly spheroidal sphere [Hz]."""
    return -frequency * ellipticity / 6.0 * (1.0 - 3.0 * m * m / (l * l))


def solve_resonance(
    geometry: SphereGeometry,
    polarization: Polarization,
    n: int,
    l: int,
    m: Optional[int] = None,
) -> ModeResonance:
    """
    Resonance frequency of mode (n, l, m, polarization).

    The frequency is the real root of the characteristic equation plus a
    first-order ellipticity offset (zero for a perfect sphere). The
    linewidth is left unset; apply a loss budget with ``with_q``.
    """
    mode = ModeId(n=n, l=l, m=m, polarization=polarization)
    x_medium = solve_size_parameter(l, n, geometry.relative_index, mode.polarization)
    x_vacuum = x_medium / geometry.surrounding_index
    frequency = C_LIGHT * x_vacuum / (2.0 * math.pi * geometry.radius)
    if geometry.ellipticity:
        frequency += ellipticity_shift(frequency, geometry.ellipticity, l, mode.m)
    return ModeResonance(mode=mode, frequency=frequency, size_parameter=x_vacuum)


def nearest_mode_number(
    geometry: SphereGeometry, polarization: Polarization, n: int, target_frequency: float
) -> int:
    """Angular momentum l whose (n, l) resonance lies closest to ``target_frequency``."""
    x_target = 2.0 * math.pi * geometry.radius * target_frequency / C_LIGHT
    l = max(1, int(round(geometry.refractive_index * x_target)))

    @lru_cache(maxsize=None)
    def freq(k: int) -> float:
        return solve_resonance(geometry, polarization, n, k).frequency

    # jump by whole mode spacings (~nu / l) until the step rounds to zero
    for _ in range(32):
        f = freq(l)
        step = int(round((target_frequency - f) / (f / l)))
        if step == 0 or l + step < 1:
            break
        l += step
    return min((k for k in (l - 1, l, l + 1) if k >= 1), key=lambda k: abs(freq(k) - target_frequency))
