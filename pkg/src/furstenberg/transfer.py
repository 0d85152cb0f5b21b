"""Grid discretization of the averaging operator on the projective circle and
its oscillatory perturbations: leading-eigenvalue curves, spectral-radius
scans, equidistribution decay, stationary density, and diagnostic norms.

The discretization is collocation with linear interpolation at image nodes;
weights in each row are nonnegative and sum to one, so the unperturbed
operator is exactly Markov: it fixes constants and preserves positivity.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import GeneratorMeasure

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000


class NonConvergenceError(RuntimeError):
    """An eigen-iteration failed to reach its tolerance."""


@dataclass(frozen=True)
class GridFunction:
    """Values at the uniform circle grid theta_i = 2 pi i / nodes."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size < 16 or v.size & (v.size - 1):
            raise ValueError("grid size must be a power of two, >= 16")
        if not np.isfinite(v).all():
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def nodes(self) -> int:
        return self.values.size

    def thetas(self) -> np.ndarray:
        return K.TWO_PI * np.arange(self.nodes) / self.nodes

    @staticmethod
    def from_function(f, nodes: int) -> "GridFunction":
        th = K.TWO_PI * np.arange(nodes) / nodes
        return GridFunction(np.asarray(f(th)))

    @staticmethod
    def constant(c, nodes: int) -> "GridFunction":
        return GridFunction(np.full(nodes, c, dtype=complex if isinstance(c, complex) else float))


class TransferOperator:
    """Discretized perturbed averaging operator at frequency xi.

    (P_xi u)(x_i) = sum_a w_a exp(i xi sigma_a(x_i)) u(g_a x_i), with u read
    off the grid by periodic interpolation of order 1 (linear, default) or 3.
    """

    def __init__(self, measure: GeneratorMeasure, xi: float, grid: int,
                 order: int = 1):
        if not measure.real_flag:
            raise ValueError("the circle discretization needs real atoms")
        if order not in (1, 3):
            raise ValueError("interpolation order must be 1 or 3")
        g = GridFunction.constant(0.0, grid)  # validates the grid size
        self.measure = measure
        self.xi = float(xi)
        self.grid = grid
        self.order = order
        th = g.thetas()
        vecs = K.vecs_from_theta(th)
        self._atom_data = []
        for mat, w in measure.atoms:
            img = K.matvec2(mat.m[None, :, :], vecs)
            norms = np.sqrt(np.sum(img * img, axis=-1))
            sigma = np.log(norms)
            theta_img = K.theta_from_vecs(img)
            pos = theta_img * grid / K.TWO_PI
            base = np.floor(pos).astype(np.intp)
            frac = pos - base
            base %= grid
            phase = w * np.exp(1j * self.xi * sigma) if self.xi != 0.0 else np.full(grid, w)
            self._atom_data.append((base, frac, phase))

    # -- application ---------------------------------------------------------

    def _interp(self, values: np.ndarray, base: np.ndarray, frac: np.ndarray) -> np.ndarray:
        n = self.grid
        if self.order == 1:
            return values[base] * (1.0 - frac) + values[(base + 1) % n] * frac
        # cubic (Catmull-Rom); weights sum to 1 but are not all nonnegative
        t = frac
        w0 = -0.5 * t * (1 - t) ** 2
        w1 = 1 + t * t * (1.5 * t - 2.5)
        w2 = 0.5 * t * (1 + 4 * t - 3 * t * t)
        w3 = 0.5 * t * t * (t - 1)
        return (values[(base - 1) % n] * w0 + values[base] * w1
                + values[(base + 1) % n] * w2 + values[(base + 2) % n] * w3)

    def apply(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid, dtype=complex if (self.xi != 0.0 or np.iscomplexobj(values)) else float)
        for base, frac, phase in self._atom_data:
            out = out + phase * self._interp(values, base, frac)
        return out

    def apply_adjoint(self, values: np.ndarray) -> np.ndarray:
        """Transpose action, used for left fixed vectors (order 1 only)."""
        if self.order != 1:
            raise NotImplementedError("adjoint application requires order 1")
        n = self.grid
        out = np.zeros(n, dtype=complex if (self.xi != 0.0 or np.iscomplexobj(values)) else float)
        for base, frac, phase in self._atom_data:
            contrib = phase * values
            np.add.at(out, base, contrib * (1.0 - frac))
            np.add.at(out, (base + 1) % n, contrib * frac)
        return out

    def materialize(self) -> np.ndarray:
        """Dense matrix; for modest grids and the dense-solver cross-checks."""
        if self.grid > 4096:
            raise ValueError("dense form limited to grids <= 4096")
        n = self.grid
        M = np.zeros((n, n), dtype=complex)
        rows = np.arange(n)
        for base, frac, phase in self._atom_data:
            if self.order == 1:
                np.add.at(M, (rows, base), phase * (1.0 - frac))
                np.add.at(M, (rows, (base + 1) % n), phase * frac)
            else:
                t = frac
                ws = [-0.5 * t * (1 - t) ** 2,
                      1 + t * t * (1.5 * t - 2.5),
                      0.5 * t * (1 + 4 * t - 3 * t * t),
                      0.5 * t * t * (t - 1)]
                for off, w in zip((-1, 0, 1, 2), ws):
                    np.add.at(M, (rows, (base + off) % n), phase * w)
        return M


def apply_P(op: TransferOperator, u: GridFunction, n: int) -> GridFunction:
    if u.nodes != op.grid:
        raise ValueError(f"grid mismatch: {u.nodes} vs {op.grid}")
    if n < 0:
        raise ValueError("n must be >= 0")
    v = u.values
    for _ in range(n):
        v = op.apply(v)
    return GridFunction(v)


def leading_eigen(op: TransferOperator, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> tuple[complex, GridFunction]:
    """Dominant eigenpair by power iteration.

    Converged when |P v - lambda v|_inf <= tol |v|_inf.  The eigenfunction is
    normalized with a real positive value at node 0.
    """
    if not (tol > 0):
        raise ValueError("tol must be positive")
    v = np.ones(op.grid, dtype=complex)
    lam = 1.0 + 0j
    for _ in range(max_iter):
        w = op.apply(v)
        j = int(np.argmax(np.abs(v)))
        lam = w[j] / v[j]
        res = np.max(np.abs(w - lam * v)) / np.max(np.abs(v))
        norm = np.max(np.abs(w))
        if norm == 0.0:
            raise NonConvergenceError("iterate collapsed to zero")
        pivot = w[int(np.argmax(np.abs(w)))]
        v = w * (abs(pivot) / pivot) / norm
        if res <= tol:
            if abs(v[0]) > 0:
                v = v * (abs(v[0]) / v[0])
            lam = complex(lam)
            vals = v.real if abs(lam.imag) < 1e-14 and np.max(np.abs(v.imag)) < 1e-12 else v
            return lam, GridFunction(vals)
    raise NonConvergenceError(
        f"no eigen convergence in {max_iter} iterations (residual {res:.3g}); "
        "the gap may vanish or xi may sit outside the perturbative range")


def subdominant_modulus(op: TransferOperator, lam: complex, right: GridFunction,
                        tol: float = 1e-8, max_iter: int = 20_000) -> float:
    """Second eigenvalue modulus via deflation against the left eigenvector."""
    wl = np.ones(op.grid, dtype=complex)
    for _ in range(max_iter):
        nxt = op.apply_adjoint(wl)
        nrm = np.max(np.abs(nxt))
        if nrm == 0:
            raise NonConvergenceError("left iterate collapsed")
        nxt /= nrm
        if np.max(np.abs(nxt - wl * np.vdot(wl, nxt) / np.vdot(wl, wl))) < 1e-10:
            wl = nxt
            break
        wl = nxt
    r = right.values.astype(complex)
    proj = np.vdot(wl, r)
    if abs(proj) < 1e-14:
        raise NonConvergenceError("left/right eigenvectors nearly orthogonal")
    rng = np.random.default_rng(0)
    v = rng.standard_normal(op.grid) + 1j * rng.standard_normal(op.grid)
    v -= r * (np.vdot(wl, v) / proj)
    v /= np.max(np.abs(v))
    mod_prev = None
    for it in range(max_iter):
        w = op.apply(v)
        w -= r * (np.vdot(wl, w) / proj)
        mod = np.max(np.abs(w))
        if mod == 0.0:
            return 0.0
        v = w / mod
        if mod_prev is not None and abs(mod - mod_prev) <= tol * max(mod, 1e-30):
            return float(mod)
        mod_prev = mod
    raise NonConvergenceError("subdominant deflation did not settle "
                              "(degenerate gap is the usual cause)")


def stationary_density(op: TransferOperator, tol: float = 1e-13,
                       max_iter: int = DEFAULT_MAX_ITER) -> GridFunction:
    """Left fixed vector of the unperturbed operator, as a density.

    Values are a density with respect to the normalized angle measure
    d(theta)/2pi, so their mean is one; nonnegative up to a -1e-8 clip.
    """
    if op.xi != 0.0:
        raise ValueError("stationary density is defined at xi = 0")
    m = np.full(op.grid, 1.0)
    for _ in range(max_iter):
        nxt = op.apply_adjoint(m).real
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - m / m.sum())) * op.grid <= tol:
            m = nxt
            break
        m = nxt
    else:
        raise NonConvergenceError("left fixed vector did not converge")
    if m.min() < -1e-8:
        warnings.warn("left fixed vector has a significantly negative entry; "
                      "result may be unreliable", RuntimeWarning)
    m = np.clip(m, 0.0, None)
    m = m / m.sum() * op.grid  # mean one <=> integrates to one against dtheta/2pi
    try:
        gap = subdominant_modulus(op, 1.0 + 0j, GridFunction(np.ones(op.grid)),
                                  tol=1e-6, max_iter=5000)
        if gap > 1.0 - 1e-6:
            warnings.warn("unit subdominant modulus: fixed density is not unique",
                          RuntimeWarning)
    except NonConvergenceError:
        warnings.warn("subdominant deflation did not converge; fixed density "
                      "may not be unique", RuntimeWarning)
    return GridFunction(m)


def density_cdf(density: GridFunction) -> np.ndarray:
    """CDF over theta at the grid nodes (right endpoints)."""
    w = density.values / density.values.sum()
    return np.cumsum(w)


@dataclass(frozen=True)
class LambdaCurve:
    xi_grid: np.ndarray
    lam: np.ndarray
    gamma_fit: float
    curvature_fit: float
    residual: float
    grid: int


def lambda_curve(measure: GeneratorMeasure, xi_max: float, m_points: int,
                 grid: int, order: int = 1, tol: float = DEFAULT_TOL) -> LambdaCurve:
    """Leading eigenvalue on a symmetric xi grid with local quadratic fits.

    gamma_fit is the linear coefficient of Im(lambda), curvature_fit the
    quadratic rate kappa in Re(lambda) ~ 1 - kappa xi^2 / 2; the reported
    residual is the worst deviation from the fitted second-order model.
    """
    if not (0 < xi_max <= 1):
        raise ValueError("xi_max must lie in (0, 1]")
    if m_points < 5:
        raise ValueError("need at least 5 points")
    xis = np.linspace(-xi_max, xi_max, m_points)
    lam = np.empty(m_points, dtype=complex)
    for i, xi in enumerate(xis):
        op = TransferOperator(measure, xi, grid, order)
        lam[i], _ = leading_eigen(op, tol=tol)
    if np.max(np.abs(lam)) > 1.0 + 1e-6:
        raise NonConvergenceError("eigenvalue modulus above one on the scan")
    nz = xis != 0.0
    gamma_fit = float(np.sum(xis[nz] * lam[nz].imag) / np.sum(xis[nz] ** 2))
    curvature_fit = float(2.0 * np.sum(xis[nz] ** 2 * (1.0 - lam[nz].real))
                          / np.sum(xis[nz] ** 4))
    model = 1.0 + 1j * gamma_fit * xis - curvature_fit * xis ** 2 / 2.0
    residual = float(np.max(np.abs(lam - model)))
    return LambdaCurve(xi_grid=xis, lam=lam, gamma_fit=gamma_fit,
                       curvature_fit=curvature_fit, residual=residual, grid=grid)


_SCAN_BASIS = (
    lambda th: np.ones_like(th),
    lambda th: np.cos(th),
    lambda th: np.sin(th),
    lambda th: np.cos(2 * th),
    lambda th: np.sin(2 * th),
)


def spectral_radius_scan(measure: GeneratorMeasure, xi_list, grid: int,
                         n_powers: int = 200, order: int = 1) -> list[tuple[float, float]]:
    """Power-decay estimates (|P_xi^n u|_inf)^(1/n) maximized over test
    functions; 1.0 at xi = 0, expected below 1 elsewhere for mixing measures.
    """
    th = K.TWO_PI * np.arange(grid) / grid
    out = []
    for xi in xi_list:
        op = TransferOperator(measure, float(xi), grid, order)
        best = 0.0
        for f in _SCAN_BASIS:
            v = f(th).astype(complex)
            scale = np.max(np.abs(v))
            v /= scale
            logacc = math.log(scale)
            for _ in range(n_powers):
                v = op.apply(v)
                nrm = np.max(np.abs(v))
                if nrm == 0.0:
                    logacc = -math.inf
                    break
                v /= nrm
                logacc += math.log(nrm)
            rate = 0.0 if logacc == -math.inf else math.exp(
                (logacc - math.log(scale)) / n_powers)
            best = max(best, rate)
        out.append((float(xi), best))
    return out


@dataclass(frozen=True)
class EquidistributionReport:
    rows: tuple[tuple[int, float], ...]
    slope: float
    r_squared: float
    limit_value: float


def equidistribution_check(measure: GeneratorMeasure, u: GridFunction,
                           n_list) -> EquidistributionReport:
    """Sup-norm decay of P^n u towards the discrete stationary mean, with a
    straight-line fit of log deviation against n."""
    op = TransferOperator(measure, 0.0, u.nodes, 1)
    dens = stationary_density(op)
    weights = dens.values / dens.values.sum()
    target = float(np.real(np.sum(weights * u.values)))
    rows = []
    v = u.values.astype(float) if not np.iscomplexobj(u.values) else u.values
    n_list = sorted(int(n) for n in n_list)
    cur = 0
    for n in n_list:
        while cur < n:
            v = op.apply(v)
            cur += 1
        rows.append((n, float(np.max(np.abs(v - target)))))
    ns = np.array([r[0] for r in rows], dtype=float)
    devs = np.array([max(r[1], 1e-300) for r in rows])
    logs = np.log(devs)
    A = np.vstack([ns, np.ones_like(ns)]).T
    coef, *_ = np.linalg.lstsq(A, logs, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((logs - fit) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return EquidistributionReport(rows=tuple(rows), slope=float(coef[0]),
                                  r_squared=r2, limit_value=target)


# ----------------------------------------------------------------------------
# Leading-eigenvalue sources for the oscillatory level-crossing integral.


def synthetic_lambda(gamma: float, a: float):
    """The model curve exp(i gamma xi - a^2 xi^2 / 2), vectorized."""

    def lam(xi):
        xi = np.asarray(xi, dtype=float)
        return np.exp(1j * gamma * xi - 0.5 * (a * xi) ** 2)

    return lam


def curve_interpolant(curve: LambdaCurve):
    """Smooth source built on log(lambda): cubic splines in modulus and
    unwrapped phase, accurate enough to take large powers afterwards."""
    from scipy.interpolate import CubicSpline

    logmod = np.log(np.abs(curve.lam))
    phase = np.unwrap(np.angle(curve.lam))
    sm = CubicSpline(curve.xi_grid, logmod)
    sp = CubicSpline(curve.xi_grid, phase)

    def lam(xi):
        xi = np.asarray(xi, dtype=float)
        return np.exp(sm(xi) + 1j * sp(xi))

    return lam


def b_eps_k(lambda_source, epsilon: float, k: int) -> float:
    """integral_0^epsilon (lambda_xi^k / (i xi) + lambda_{-xi}^k / (-i xi)) dxi.

    The symmetric combination (lambda_xi^k - lambda_{-xi}^k)/(i xi) is finite
    at 0; the node there is filled by one-sided extrapolation.  Composite
    Simpson with a node density tied to the phase speed k*gamma.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive")
    if k == 0:
        return 0.0
    h0 = 1e-7 * epsilon
    gamma_eff = abs(np.angle(complex(lambda_source(h0)))) / h0
    osc = max(k * max(gamma_eff, 1e-12) * epsilon / (2 * math.pi), 1.0)
    n_panels = int(min(max(4096, 24 * osc), 4_000_000))
    n_nodes = 2 * n_panels + 1
    xi = np.linspace(0.0, epsilon, n_nodes)

    def integrand(x):
        lp = lambda_source(x) ** k
        lm = lambda_source(-x) ** k
        return ((lp - lm) / (1j * x)).real

    vals = np.empty(n_nodes)
    vals[1:] = integrand(xi[1:])
    h = xi[1]
    vals[0] = 2.0 * integrand(np.array([0.5 * h]))[0] - integrand(np.array([h]))
    if not np.isfinite(vals).all():
        raise ArithmeticError("quadrature failure: non-finite integrand")
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(np.sum(w * vals) * h / 3.0)


# ----------------------------------------------------------------------------
# Discrete diagnostic norms.


def discrete_norms(u: GridFunction, p: float) -> tuple[float, float, float]:
    """(Sobolev-style norm, log^p modulus seminorm, sup norm).

    The first entry is the L2 norm plus the L2 norm of the angular derivative
    by centered differences; the seminorm takes the pairwise sup of
    |u(x)-u(y)| (1 + |log d(x,y)|)^p over all grid pairs, O(N^2).
    """
    n = u.nodes
    if n > 4096:
        raise ValueError("pairwise seminorm limited to grids <= 4096")
    v = u.values
    l2 = float(np.sqrt(np.mean(np.abs(v) ** 2)))
    dtheta = K.TWO_PI / n
    deriv = (np.roll(v, -1) - np.roll(v, 1)) / (2 * dtheta)
    w12 = l2 + float(np.sqrt(np.mean(np.abs(deriv) ** 2)))
    sup = float(np.max(np.abs(v)))

    th = u.thetas()
    semi = 0.0
    for i in range(1, n):  # offset loop: all pairs at grid offset i
        d = np.abs(np.sin(0.5 * (th - np.roll(th, i))))
        diff = np.abs(v - np.roll(v, i))
        logstar = 1.0 + np.abs(np.log(np.maximum(d, 1e-300)))
        semi = max(semi, float(np.max(diff * logstar ** p)))
    return w12, semi, sup
