"""
Least-squares line-shape fits with analytic Jacobians.

Dips are fitted as a product of Lorentzian dips on a linear baseline,

    y(x) = (b0 + b1 x) * prod_i [1 - d_i h_i^2 / (h_i^2 + (x - c_i)^2)],

in normalised units x = (f - f0) / s, which is the same composition the
synthesiser uses. Avoided crossings are fitted with the two-mode
eigen-branch formula on linear bare lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from ..errors import DomainError, FitError

MAX_ITERATIONS = 200
GRADIENT_TOL = 1e-10
MIN_SEGMENT_SAMPLES = 20
MIN_SEGMENT_LINEWIDTHS = 3.0
# double-line model is kept only if it cuts the RMS residual by this fraction
RMS_IMPROVEMENT = 0.2


# ---------------------------------------------------------------- models


def multi_lorentzian_model(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    y = p[0] + p[1] * x
    for c, h, d in p[2:].reshape(-1, 3):
        h2 = h * h
        y = y * (1.0 - d * h2 / (h2 + (x - c) ** 2))
    return y


def multi_lorentzian_jacobian(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    lines = p[2:].reshape(-1, 3)
    base = p[0] + p[1] * x
    k = len(lines)
    factors = np.empty((k, x.size))
    ls = np.empty((k, x.size))
    dl_dc = np.empty((k, x.size))
    dl_dh = np.empty((k, x.size))
    for i, (c, h, d) in enumerate(lines):
        delta = x - c
        h2 = h * h
        den = h2 + delta * delta
        ls[i] = h2 / den
        factors[i] = 1.0 - d * ls[i]
        dl_dc[i] = 2.0 * h2 * delta / (den * den)
        dl_dh[i] = 2.0 * h * delta * delta / (den * den)
    prod = np.prod(factors, axis=0) if k else np.ones_like(x)
    jac = np.empty((x.size, p.size))
    jac[:, 0] = prod
    jac[:, 1] = x * prod
    for i, (c, h, d) in enumerate(lines):
        others = base * (np.prod(np.delete(factors, i, axis=0), axis=0) if k > 1 else 1.0)
        jac[:, 2 + 3 * i] = -d * dl_dc[i] * others
        jac[:, 3 + 3 * i] = -d * dl_dh[i] * others
        jac[:, 4 + 3 * i] = -ls[i] * others
    return jac


def crossing_branches(p: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper branch for bare lines a0 + a1 v, b0 + b1 v and coupling g."""
    a0, a1, b0, b1, g = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    na = a0 + a1 * v
    nb = b0 + b1 * v
    mean = 0.5 * (na + nb)
    root = np.sqrt(0.25 * (na - nb) ** 2 + g * g)
    return mean - root, mean + root


def crossing_model(p: np.ndarray, v: np.ndarray, branch: np.ndarray) -> np.ndarray:
    """Branch values; ``branch`` is -1 (lower) or +1 (upper) per point."""
    lower, upper = crossing_branches(p, v)
    return np.where(np.asarray(branch) > 0, upper, lower)


def crossing_jacobian(p: np.ndarray, v: np.ndarray, branch: np.ndarray) -> np.ndarray:
    a0, a1, b0, b1, g = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    s = np.where(np.asarray(branch) > 0, 1.0, -1.0)
    delta = (a0 + a1 * v) - (b0 + b1 * v)
    root = np.sqrt(0.25 * delta * delta + g * g)
    root = np.maximum(root, 1e-300)
    d_delta = s * 0.25 * delta / root
    jac = np.empty((v.size, 5))
    jac[:, 0] = 0.5 + d_delta
    jac[:, 1] = (0.5 + d_delta) * v
    jac[:, 2] = 0.5 - d_delta
    jac[:, 3] = (0.5 - d_delta) * v
    jac[:, 4] = s * g / root
    return jac


def linear_model(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    return p[0] + p[1] * np.asarray(v, dtype=float)


def linear_jacobian(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.column_stack([np.ones_like(v), v])


@dataclass(frozen=True)
class FitModel:
    """A model f(p, x, *aux) with its analytic Jacobian."""

    name: str
    model: Callable
    jacobian: Callable


FIT_MODELS: dict[str, FitModel] = {
    "lorentzian": FitModel("lorentzian", multi_lorentzian_model, multi_lorentzian_jacobian),
    "crossing": FitModel("crossing", crossing_model, crossing_jacobian),
    "linear": FitModel("linear", linear_model, linear_jacobian),
}


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class LineEstimate:
    center: float
    fwhm: float
    depth: float
    center_err: float = math.nan
    fwhm_err: float = math.nan
    depth_err: float = math.nan

    def to_dict(self) -> dict:
        return {k: _num(getattr(self, k)) for k in
                ("center", "fwhm", "depth", "center_err", "fwhm_err", "depth_err")}


@dataclass(frozen=True, eq=False)
class LineFit:
    """Product-of-Lorentzians fit of one segment (all values in Hz)."""

    lines: tuple[LineEstimate, ...]
    baseline: tuple[float, float]
    residual_rms: float
    gradient_norm: float
    iterations: int
    covariance: np.ndarray
    origin: float
    scale: float

    @property
    def n_lines(self) -> int:
        return len(self.lines)


@dataclass(frozen=True, eq=False)
class DoubletFit:
    """
    Outcome of a one-versus-two line fit. ``model`` is ``"double"`` when
    the second line is justified, otherwise ``"single"`` and both slots
    hold the single line (splitting 0).
    """

    model: str
    center_1: float
    center_2: float
    fwhm_1: float
    fwhm_2: float
    depths: tuple[float, float]
    splitting: float
    residual_rms: float
    splitting_err: float
    rms_improvement: float
    single: LineFit
    double: Optional[LineFit] = None

    @property
    def chosen(self) -> LineFit:
        return self.double if self.model == "double" else self.single

    @property
    def lines(self) -> tuple[LineEstimate, ...]:
        return self.chosen.lines

    @property
    def center(self) -> float:
        return 0.5 * (self.center_1 + self.center_2)

    @property
    def gradient_norm(self) -> float:
        return self.chosen.gradient_norm

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "center_1": _num(self.center_1),
            "center_2": _num(self.center_2),
            "fwhm_1": _num(self.fwhm_1),
            "fwhm_2": _num(self.fwhm_2),
            "depths": [_num(d) for d in self.depths],
            "splitting": _num(self.splitting),
            "splitting_err": _num(self.splitting_err),
            "residual_rms": _num(self.residual_rms),
            "rms_improvement": _num(self.rms_improvement),
            "gradient_norm": _num(self.gradient_norm),
            "lines": [ln.to_dict() for ln in self.lines],
        }


@dataclass(frozen=True, eq=False)
class CrossingFit:
    """Two linear bare lines coupled with strength g; slopes in Hz/V."""

    g: float
    g_err: float
    slope_a: float
    slope_b: float
    intercept_a: float
    intercept_b: float
    crossing_voltage: float
    residual_rms: float
    covariance: np.ndarray = field(repr=False)

    @property
    def minimum_gap(self) -> float:
        return 2.0 * self.g

    def to_dict(self) -> dict:
        return {
            "g": _num(self.g),
            "g_err": _num(self.g_err),
            "minimum_gap": _num(self.minimum_gap),
            "slope_a": _num(self.slope_a),
            "slope_b": _num(self.slope_b),
            "intercept_a": _num(self.intercept_a),
            "intercept_b": _num(self.intercept_b),
            "crossing_voltage": _num(self.crossing_voltage),
            "residual_rms": _num(self.residual_rms),
        }


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


# ---------------------------------------------------------------- solver


def _solve(fun, jac, p0, n_obs):
    try:
        res = least_squares(fun, p0, jac=jac, method="lm", xtol=1e-12, ftol=1e-12,
                            gtol=GRADIENT_TOL, max_nfev=MAX_ITERATIONS)
    except ValueError as exc:
        raise FitError(f"least squares failed: {exc}", {"p0": p0.tolist()}) from None
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitError(
            f"least squares did not converge: {res.message}",
            {"nfev": int(res.nfev), "status": int(res.status), "cost": float(res.cost), "p0": p0.tolist()},
        )
    jm = res.jac
    dof = max(n_obs - p0.size, 1)
    s2 = 2.0 * res.cost / dof
    cov = np.linalg.pinv(jm.T @ jm) * s2
    grad = float(np.linalg.norm(jm.T @ res.fun, ord=np.inf))
    return res, cov, grad


def fit_lines(
    frequency: np.ndarray,
    transmission: np.ndarray,
    guesses: Sequence[tuple[float, float, float]],
) -> LineFit:
    """
    Fit k Lorentzian dips on a linear baseline.

    ``guesses`` are (center, fwhm, depth) per line in Hz. The segment must
    hold at least 20 samples spanning 3 linewidths.
    """
    f = np.asarray(frequency, dtype=float)
    y = np.asarray(transmission, dtype=float)
    if f.shape != y.shape or f.ndim != 1:
        raise DomainError("frequency and transmission must be 1-D arrays of equal length")
    if not guesses:
        raise DomainError("at least one line guess is required")
    widest = max(g[1] for g in guesses)
    if f.size < MIN_SEGMENT_SAMPLES or f[-1] - f[0] < MIN_SEGMENT_LINEWIDTHS * widest:
        raise DomainError(
            f"degenerate segment: {f.size} samples over {f[-1] - f[0]:.4g} Hz "
            f"(need >= {MIN_SEGMENT_SAMPLES} samples and >= {MIN_SEGMENT_LINEWIDTHS:g} linewidths)"
        )
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
        raise DomainError("segment contains non-finite values")
    origin = float(np.mean([g[0] for g in guesses]))
    scale = 0.5 * widest
    x = (f - origin) / scale
    edge = np.r_[y[:3], y[-3:]]
    p0 = [float(np.median(edge)), 0.0]
    for c, w, d in guesses:
        p0 += [(c - origin) / scale, 0.5 * w / scale, float(np.clip(d, 0.01, 1.0))]
    p0 = np.asarray(p0)

    res, cov, grad = _solve(
        lambda p: multi_lorentzian_model(p, x) - y,
        lambda p: multi_lorentzian_jacobian(p, x),
        p0,
        y.size,
    )
    p = res.x
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    lines = []
    for i, (c, h, d) in enumerate(p[2:].reshape(-1, 3)):
        j = 2 + 3 * i
        lines.append(LineEstimate(
            center=origin + c * scale,
            fwhm=2.0 * abs(h) * scale,
            depth=float(d),
            center_err=err[j] * scale,
            fwhm_err=2.0 * err[j + 1] * scale,
            depth_err=err[j + 2],
        ))
    order = np.argsort([ln.center for ln in lines], kind="stable")
    rms = float(np.sqrt(np.mean(res.fun**2)))
    # covariance in physical units for the (c, fwhm, depth) blocks
    units = np.r_[1.0, 1.0 / scale, np.tile([scale, 2.0 * scale, 1.0], len(lines))]
    cov_phys = cov * np.outer(units, units)
    return LineFit(
        lines=tuple(lines[i] for i in order),
        baseline=(float(p[0]), float(p[1] / scale)),
        residual_rms=rms,
        gradient_norm=grad,
        iterations=int(res.nfev),
        covariance=cov_phys,
        origin=origin,
        scale=scale,
    )


def fit_lorentzian_doublet(
    frequency: np.ndarray,
    transmission: np.ndarray,
    guess: Optional[Sequence[tuple[float, float, float]]] = None,
) -> DoubletFit:
    """
    Fit one and two Lorentzian dips and keep the two-line model only if it
    lowers the RMS residual by more than 20 % and resolves a splitting
    above half the larger fitted width.

    ``guess`` holds one or two (center, fwhm, depth) tuples; without it the
    deepest point of the segment seeds a single line.
    """
    f = np.asarray(frequency, dtype=float)
    y = np.asarray(transmission, dtype=float)
    if guess is None or len(guess) == 0:
        guess = [_guess_single(f, y)]
    guess = [tuple(map(float, g)) for g in guess]
    if len(guess) > 2:
        raise DomainError("a doublet fit takes at most two line guesses")

    if len(guess) == 2:
        c = 0.5 * (guess[0][0] + guess[1][0])
        w = max(guess[0][1], guess[1][1]) + abs(guess[1][0] - guess[0][0])
        d = max(guess[0][2], guess[1][2])
        single_guess = [(c, w, d)]
        double_guess = guess
    else:
        c, w, d = guess[0]
        single_guess = guess
        double_guess = [(c - 0.25 * w, 0.7 * w, d), (c + 0.25 * w, 0.7 * w, d)]

    single = fit_lines(f, y, single_guess)
    try:
        double = fit_lines(f, y, double_guess)
    except FitError:
        double = None

    s_line = single.lines[0]
    if double is not None:
        l1, l2 = double.lines
        split = l2.center - l1.center
        improvement = 1.0 - double.residual_rms / single.residual_rms if single.residual_rms > 0 else 0.0
        use_double = (
            improvement > RMS_IMPROVEMENT
            and split > 0.5 * max(l1.fwhm, l2.fwhm)
            and min(l1.depth, l2.depth) > 0
        )
    else:
        improvement = 0.0
        use_double = False

    if use_double:
        cov = double.covariance
        # var(c1 - c2) is symmetric, so the sort order of the lines does not matter
        i1, i2 = 2, 5
        var = cov[i1, i1] + cov[i2, i2] - 2 * cov[i1, i2]
        return DoubletFit(
            model="double",
            center_1=l1.center,
            center_2=l2.center,
            fwhm_1=l1.fwhm,
            fwhm_2=l2.fwhm,
            depths=(l1.depth, l2.depth),
            splitting=split,
            residual_rms=double.residual_rms,
            splitting_err=math.sqrt(max(var, 0.0)),
            rms_improvement=improvement,
            single=single,
            double=double,
        )
    return DoubletFit(
        model="single",
        center_1=s_line.center,
        center_2=s_line.center,
        fwhm_1=s_line.fwhm,
        fwhm_2=s_line.fwhm,
        depths=(s_line.depth, s_line.depth),
        splitting=0.0,
        residual_rms=single.residual_rms,
        splitting_err=math.nan,
        rms_improvement=improvement,
        single=single,
        double=double,
    )


def _guess_single(f: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    base = float(np.median(np.r_[y[: max(3, y.size // 10)], y[-max(3, y.size // 10):]]))
    i = int(np.argmin(y))
    depth = max(1.0 - y[i] / base, 0.01)
    half = base * (1.0 - 0.5 * depth)
    lo = i
    while lo > 0 and y[lo] < half:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi] < half:
        hi += 1
    width = max(f[hi] - f[lo], 2.0 * (f[1] - f[0]))
    return float(f[i]), float(width), depth


def fit_avoided_crossing(
    voltage_a: np.ndarray,
    freq_a: np.ndarray,
    voltage_b: np.ndarray,
    freq_b: np.ndarray,
) -> CrossingFit:
    """
    Fit the eigen-branch model to two tracked branches.

    Points are sorted into lower and upper branch at each shared voltage;
    the separation must reach its minimum strictly inside the range.
    """
    va, fa = np.asarray(voltage_a, float), np.asarray(freq_a, float)
    vb, fb = np.asarray(voltage_b, float), np.asarray(freq_b, float)
    common, ia, ib = np.intersect1d(va, vb, return_indices=True)
    if common.size < 5:
        raise FitError("branches share fewer than 5 voltages", {"shared": int(common.size)})
    lo = np.minimum(fa[ia], fb[ib])
    hi = np.maximum(fa[ia], fb[ib])
    sep = hi - lo
    k = int(np.argmin(sep))
    if k == 0 or k == common.size - 1:
        raise FitError(
            "no closest approach inside the voltage range",
            {"closest_index": k, "n": int(common.size), "min_separation": float(sep[k])},
        )
    v0 = float(common.mean())
    vs = float(np.ptp(common)) or 1.0
    f0 = float(np.mean(np.r_[lo, hi]))
    fs = float(np.ptp(np.r_[lo, hi])) or 1.0
    v = (common - v0) / vs
    ylo = (lo - f0) / fs
    yhi = (hi - f0) / fs

    # bare lines through opposite ends of the two branches
    a1 = (yhi[-1] - ylo[0]) / (v[-1] - v[0])
    a0 = ylo[0] - a1 * v[0]
    b1 = (ylo[-1] - yhi[0]) / (v[-1] - v[0])
    b0 = yhi[0] - b1 * v[0]
    g0 = max(0.5 * sep[k] / fs, 1e-6)
    p0 = np.array([a0, a1, b0, b1, g0])

    vv = np.r_[v, v]
    branch = np.r_[-np.ones_like(v), np.ones_like(v)]
    obs = np.r_[ylo, yhi]
    res, cov, _ = _solve(
        lambda p: crossing_model(p, vv, branch) - obs,
        lambda p: crossing_jacobian(p, vv, branch),
        p0,
        obs.size,
    )
    a0, a1, b0, b1, g = res.x
    slope_a, slope_b = a1 * fs / vs, b1 * fs / vs
    int_a = f0 + fs * (a0 - a1 * v0 / vs)
    int_b = f0 + fs * (b0 - b1 * v0 / vs)
    v_cross = v0 + vs * (b0 - a0) / (a1 - b1) if a1 != b1 else math.nan
    units = np.array([fs, fs / vs, fs, fs / vs, fs])
    cov_phys = cov * np.outer(units, units)
    return CrossingFit(
        g=abs(g) * fs,
        g_err=math.sqrt(max(cov_phys[4, 4], 0.0)),
        slope_a=slope_a,
        slope_b=slope_b,
        intercept_a=int_a,
        intercept_b=int_b,
        crossing_voltage=v_cross,
        residual_rms=float(np.sqrt(np.mean(res.fun**2))) * fs,
        covariance=cov_phys,
    )


def fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Ordinary least-squares straight line; returns (intercept, slope, intercept_err, slope_err)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 2:
        return (float(y[0]) if y.size else math.nan), math.nan, math.nan, math.nan
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        return float(y.mean()), math.nan, math.nan, math.nan
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    icpt = float(y.mean() - slope * xm)
    if x.size < 3:
        return icpt, slope, math.nan, math.nan
    s2 = float(np.sum((y - icpt - slope * x) ** 2)) / (x.size - 2)
    slope_err = math.sqrt(s2 / sxx)
    icpt_err = math.sqrt(s2 * (1.0 / x.size + xm * xm / sxx))
    return icpt, slope, icpt_err, slope_err
