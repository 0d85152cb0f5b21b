"""Fourier-analytic utilities: band-limited smoothing kernels, principal-value
evaluation of Hilbert-type integrals, convolution approximation profiles, and
a Hoelder-to-decay probe.

Transform convention: fhat(xi) = integral f(u) exp(-i u xi) du, inverse with
the 1/(2 pi) factor, so conv(f, g)^ = fhat * ghat.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm as _gauss

# base bump: c0 * sinc^4(u/4); its transform is the cubic B-spline on [-1, 1],
# twice continuously differentiable, and c0 = 3/(8 pi) makes the mass one
_C0 = 3.0 / (8.0 * math.pi)


def _sinc(x: np.ndarray) -> np.ndarray:
    return np.sinc(np.asarray(x, dtype=float) / math.pi)


def base_density(u) -> np.ndarray:
    return _C0 * _sinc(np.asarray(u, dtype=float) / 4.0) ** 4


def _bspline4(x) -> np.ndarray:
    """Centered cubic B-spline: support [-2, 2], mass one, C^2."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    mid = x <= 1.0
    out[mid] = 2.0 / 3.0 - x[mid] ** 2 + 0.5 * x[mid] ** 3
    edge = (x > 1.0) & (x < 2.0)
    out[edge] = (2.0 - x[edge]) ** 3 / 6.0
    return out


def base_transform(xi) -> np.ndarray:
    """Transform of the base bump: 1.5 * B-spline(2 xi), support [-1, 1]."""
    return 1.5 * _bspline4(2.0 * np.asarray(xi, dtype=float))


@dataclass(frozen=True)
class Kernel:
    """Scaled kernel u -> delta^-2 base(u / delta^2).

    Its transform is supported by [-delta^-2, delta^-2] and the mass outside
    [-delta, delta] is at most a fixed constant times delta.
    """

    delta: float

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")

    @property
    def transform_support(self) -> float:
        return self.delta ** -2

    def density(self, u) -> np.ndarray:
        d2 = self.delta ** 2
        return base_density(np.asarray(u, dtype=float) / d2) / d2

    def transform(self, xi) -> np.ndarray:
        return base_transform(np.asarray(xi, dtype=float) * self.delta ** 2)

    def mass(self, lo: float, hi: float) -> float:
        d2 = self.delta ** 2
        val, _ = integrate.quad(base_density, lo / d2, hi / d2, limit=400)
        return float(val)

    def tail_mass(self) -> float:
        """Mass outside [-delta, delta]; bounded by a constant times delta."""
        return max(0.0, 1.0 - self.mass(-self.delta, self.delta))

    def tail_constant(self) -> float:
        return self.tail_mass() / self.delta


def make_kernel(delta: float) -> Kernel:
    return Kernel(delta)


# ----------------------------------------------------------------------------
# Principal values.


@dataclass(frozen=True)
class PVResult:
    lhs: complex
    rhs: complex

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


@dataclass(frozen=True)
class TestFunction:
    """A function together with its transform, for the identity checks."""

    f: object
    fhat: object


def gaussian_pair(sigma: float = 1.0) -> TestFunction:
    """Unit-mass Gaussian density and its transform exp(-(sigma xi)^2 / 2)."""
    def f(u):
        return np.exp(-0.5 * (np.asarray(u) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))

    def fhat(xi):
        return np.exp(-0.5 * (sigma * np.asarray(xi)) ** 2)

    return TestFunction(f=f, fhat=fhat)


def _pv_quad(fhat, t: float, eta: float, cutoff: float) -> complex:
    """integral_eta^cutoff [fhat(x) e^{-itx} - fhat(-x) e^{itx}] / x dx."""
    def re_part(x):
        return ((fhat(x) * np.exp(-1j * t * x) - fhat(-x) * np.exp(1j * t * x)) / x).real

    def im_part(x):
        return ((fhat(x) * np.exp(-1j * t * x) - fhat(-x) * np.exp(1j * t * x)) / x).imag

    kw = dict(limit=800, epsabs=1e-12, epsrel=1e-12)
    re, _ = integrate.quad(re_part, eta, cutoff, **kw)
    im, _ = integrate.quad(im_part, eta, cutoff, **kw)
    return re + 1j * im


def pv_hilbert(phi: TestFunction, t: float, eta: float = 4e-3,
               cutoff: float = 60.0, levels: int = 4) -> PVResult:
    """Both sides of the Hilbert-type identity

        p.v. integral fhat(xi)/xi e^{-i t xi} dxi
            = i pi [ integral_{-inf}^{-t} f - integral_{-t}^{inf} f ].

    Left side by symmetric exclusion of (-eta, eta) with Richardson
    extrapolation eta -> 0; right side by direct quadrature.
    """
    vals = []
    etas = [eta / (2 ** j) for j in range(levels)]
    for e in etas:
        vals.append(_pv_quad(phi.fhat, t, e, cutoff))
    # Richardson on the O(eta) excluded mass, then on O(eta^2)
    while len(vals) > 1:
        vals = [2.0 * b - a for a, b in zip(vals[:-1], vals[1:])]
    lhs = vals[0]
    left, err_l = integrate.quad(phi.f, -np.inf, -t, limit=400)
    right, err_r = integrate.quad(phi.f, -t, np.inf, limit=400)
    if err_l + err_r > 1e-7:
        raise ArithmeticError("right-hand quadrature failed to converge")
    rhs = 1j * math.pi * (left - right)
    return PVResult(lhs=complex(lhs), rhs=complex(rhs))


def pv_sign_kernel(xi: float, eta: float = 1e-6, cutoff: float = 1e7) -> complex:
    """p.v. integral e^{-i u xi} / u du by the same symmetric-exclusion scheme.

    The symmetric combination is -2i integral sin(u xi)/u du; evaluated with
    a sine-weighted quadrature plus the asymptotic tail correction, since the
    integrand only decays like 1/u.
    """
    if xi == 0.0:
        return 0.0 + 0.0j
    a = abs(xi)
    val, _ = integrate.quad(lambda u: 1.0 / u, eta, cutoff,
                            weight="sin", wvar=a, limit=2000)
    # integral_M^inf sin(a u)/u du = cos(a M)/(a M) + O((aM)^-2)
    tail = math.cos(a * cutoff) / (a * cutoff)
    return -2j * math.copysign(1.0, xi) * (val + tail)


# ----------------------------------------------------------------------------
# Convolution gap.


@dataclass(frozen=True)
class GapRow:
    u: float
    gap: float
    regime: str
    bound: float


def convolution_gap(phi, b1: float, b2: float, delta: float,
                    u_grid=None) -> list[GapRow]:
    """|phi_C * kernel - phi_C| profile for phi_C = phi restricted to [b1, b2].

    Regimes: interior (O(delta)), edge (O(1)), exterior (at most the
    indicator-convolution tail).  phi must be C^1 with |phi|_C1 <= 1.
    """
    if not (b2 - b1 > 2 * delta):
        raise ValueError("need b2 - b1 > 2 delta")
    ker = make_kernel(delta)
    if u_grid is None:
        pad = max(1.0, 20 * delta)
        u_grid = np.concatenate([
            np.linspace(b1 - pad, b2 + pad, 61),
            [b1, b2, 0.5 * (b1 + b2)],
        ])
        u_grid = np.unique(np.round(u_grid, 12))
    rows = []
    for u in np.asarray(u_grid, dtype=float):
        conv, _ = integrate.quad(
            lambda w: phi(w) * ker.density(u - w), b1, b2,
            limit=800, epsabs=1e-11)
        direct = phi(u) if b1 <= u <= b2 else 0.0
        gap = abs(conv - direct)
        if b1 + delta <= u <= b2 - delta:
            regime, bound = "interior", delta
        elif (b1 - delta <= u <= b1 + delta) or (b2 - delta <= u <= b2 + delta):
            regime, bound = "edge", 1.0
        else:
            regime, bound = "exterior", ker.mass(b1 - u, b2 - u)
        rows.append(GapRow(u=float(u), gap=float(gap), regime=regime,
                           bound=float(bound)))
    return rows


# ----------------------------------------------------------------------------
# Decay probe.


def fourier_transform_num(f, lo: float, hi: float, xi: float) -> complex:
    """One-frequency transform by cos/sin-weighted adaptive quadrature."""
    if xi == 0.0:
        val, _ = integrate.quad(f, lo, hi, limit=800)
        return complex(val)
    kw = dict(weight="cos", wvar=xi, limit=2000)
    re = 0.0
    im = 0.0
    for a, b in ((lo, 0.0), (0.0, hi)) if lo < 0.0 < hi else ((lo, hi),):
        r, _ = integrate.quad(f, a, b, **kw)
        i, _ = integrate.quad(f, a, b, weight="sin", wvar=xi, limit=2000)
        re += r
        im -= i
    return re + 1j * im


def holder_decay_probe(f, support: tuple[float, float], q: float,
                       xi_grid=None) -> dict:
    """sup over the grid of |fhat(xi)| (1 + |xi|)^{1/(4q-2)}.

    Intended for compactly supported functions that are locally 1/2-Hoelder
    away from the origin with blow-up rate delta^-q; the statistic stays
    bounded for that class.
    """
    if not (q > 1):
        raise ValueError("q must exceed 1")
    lo, hi = support
    if xi_grid is None:
        xi_grid = np.unique(np.round(np.logspace(0, 4, 25)))
    exponent = 1.0 / (4.0 * q - 2.0)
    stats = []
    for xi in xi_grid:
        mag = abs(fourier_transform_num(f, lo, hi, float(xi)))
        stats.append(mag * (1.0 + abs(xi)) ** exponent)
    arr = np.array(stats)
    return {
        "xi_grid": np.asarray(xi_grid, dtype=float),
        "stat": arr,
        "sup": float(arr.max()),
    }
