"""
Logarithmic derivatives of Riccati-Bessel functions at large order.

The resonance condition of a dielectric sphere only needs the ratios
psi_l'/psi_l and chi_l'/chi_l, where psi_l(z) = z j_l(z) and chi_l(z) = z y_l(z).
Working with ratios avoids the overflow of y_l and underflow of j_l at
l ~ 10^3, where the raw functions span hundreds of decades.

* psi'/psi uses the downward recurrence (Bohren & Huffman), started well
  above the turning point where the minimal solution dominates.
* chi'/chi uses the upward recurrence of the ratio chi_n / chi_{n-1},
  which is stable for the dominant solution and never overflows.

All functions accept scalars or arrays and broadcast over ``z``.
"""

from __future__ import annotations

import math

import numpy as np


def _start_order(l: int, zmax: float) -> int:
    # far enough past both l and the turning point that the seed A=0 is forgotten
    return int(math.ceil(max(l, zmax) + 4.0 * max(zmax, 1.0) ** (1.0 / 3.0) + 30))


def psi_log_derivative(l: int, z) -> np.ndarray:
    """psi_l'(z) / psi_l(z) for psi_l(z) = z j_l(z), by downward recurrence."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("argument must be positive")
    nstart = _start_order(l, float(np.max(z)))
    a = np.zeros_like(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        for n in range(nstart, l, -1):
            nz = n / z
            a = nz - 1.0 / (a + nz)
    return a


def chi_log_derivative(l: int, z) -> np.ndarray:
    """chi_l'(z) / chi_l(z) for chi_l(z) = z y_l(z), by upward recurrence of chi_n / chi_{n-1}."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("argument must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        if l == 0:
            # chi_0 = -cos z, chi_0' = sin z
            return -np.tan(z)
        r = (np.cos(z) / z + np.sin(z)) / np.cos(z)   # chi_1 / chi_0
        for n in range(1, l):
            # a zero of chi_{n-1} gives r = inf and the next ratio is exact again
            r = (2 * n + 1) / z - 1.0 / r
        return 1.0 / r - l / z
