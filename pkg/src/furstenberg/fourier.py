"""Circle chart, empirical Fourier coefficients of the stationary measure,
oscillatory integrals, the level-crossing decomposition identity, the
stable phase approximation along crossing words, and ball-mass regularity
profiling.

The chart is the double-angle map: [cos(phi) : sin(phi)] with phi in [0, pi)
goes to theta = 2 phi.  It is a smooth bijection of the real projective line
onto the circle with non-vanishing derivative, so decay of the coefficients
is indifferent to this choice; only their individual values depend on it.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import model as model_mod
from . import renewal as renewal_mod
from . import walk as walk_mod
from .model import GeneratorMeasure
from .proj2 import ProjPoint
from .walk import StationarySample, TrajectorySampler

SIGN_TOL = 1e-10


@dataclass(frozen=True)
class CircleChart:
    convention: str = "double-angle"

    def to_angle(self, x: ProjPoint) -> float:
        if not x.is_real:
            raise ValueError("the chart is defined for real points")
        return float(K.theta_from_vecs(x.v))

    def from_angle(self, theta: float) -> ProjPoint:
        return ProjPoint(K.vecs_from_theta(float(theta)))

    def to_angles(self, vecs: np.ndarray) -> np.ndarray:
        return K.theta_from_vecs(vecs)


CHART = CircleChart()


def chart(x: ProjPoint) -> float:
    return CHART.to_angle(x)


def sign(x: ProjPoint, y: ProjPoint, z: ProjPoint) -> int:
    """+1 when x, y, z sit in counterclockwise circular order, -1 otherwise,
    0 when they are not pairwise distinct (at tolerance 1e-10)."""
    pts = (x, y, z)
    if any(not p.is_real for p in pts):
        raise ValueError("sign is defined for real points only")
    th = [chart(p) for p in pts]
    for i in range(3):
        for j in range(i + 1, 3):
            if K.proj_dist_theta(th[i], th[j]) <= SIGN_TOL:
                return 0
    a = (th[1] - th[0]) % K.TWO_PI
    b = (th[2] - th[0]) % K.TWO_PI
    return 1 if a < b else -1


# ----------------------------------------------------------------------------
# Fourier coefficients.


@dataclass(frozen=True)
class FourierSeries:
    k: np.ndarray
    re: np.ndarray
    im: np.ndarray
    se: np.ndarray
    sample_size: int

    def coefficient(self, k: int) -> complex:
        kk = int(k)
        idx = np.nonzero(self.k == abs(kk))[0]
        if idx.size == 0:
            raise KeyError(f"coefficient {k} not computed")
        val = complex(self.re[idx[0]], self.im[idx[0]])
        return val if kk >= 0 else val.conjugate()

    def magnitudes(self) -> np.ndarray:
        return np.hypot(self.re, self.im)


def _osc_mean(theta: np.ndarray, k: float, phi_vals: np.ndarray | None = None,
              psi_vals: np.ndarray | None = None) -> complex:
    """Shared accumulation kernel so definitional agreements are bit-exact."""
    phase = theta if phi_vals is None else phi_vals
    z = np.exp(1j * k * phase)
    if psi_vals is not None:
        z = z * psi_vals
    return complex(np.mean(z))


def fourier_coefficients_from_sample(sample: StationarySample,
                                     k_max: int) -> FourierSeries:
    theta = sample.angles()
    ks = np.arange(0, k_max + 1)
    re = np.empty(ks.size)
    im = np.empty(ks.size)
    se = np.empty(ks.size)
    n = theta.size
    for i, k in enumerate(ks):
        val = _osc_mean(theta, float(k))
        re[i], im[i] = val.real, val.imag
        se[i] = math.sqrt(max(1.0 - abs(val) ** 2, 0.0) / n)
    return FourierSeries(k=ks, re=re, im=im, se=se, sample_size=n)


def fourier_coefficients(sampler: TrajectorySampler, k_max: int, N: int,
                         burn_in: int = 200) -> FourierSeries:
    """Empirical coefficients (1/N) sum exp(i k theta_j) over stationary
    samples, with the per-coefficient error scale sqrt((1-|c|^2)/N).

    Warns when the non-elementarity probe cannot vouch for the measure, since
    stationary uniqueness (and decay) may then fail.
    """
    if not sampler.measure.real_flag:
        raise ValueError("coefficients need a real generator measure")
    verdict = model_mod.nonelementary_probe(sampler.measure).verdict
    if verdict != model_mod.VERDICT_LIKELY:
        warnings.warn(
            f"non-elementarity probe verdict is {verdict!r}; the stationary "
            "measure may be non-unique and coefficients may not decay",
            RuntimeWarning)
    sample = walk_mod.empirical_measure(sampler, burn_in, N)
    return fourier_coefficients_from_sample(sample, k_max)


# ----------------------------------------------------------------------------
# Oscillatory integrals.


@dataclass(frozen=True)
class OscillatoryQuery:
    """Integral of exp(i k phi) psi against the stationary measure.

    phi must be C^2 with norm at most c and |phi'| >= 1/c on the support of
    psi; both bounds are checked numerically on a fine grid.
    """

    phi: object
    psi: object
    c: float
    k: float

    def verify(self, grid: int = 8192) -> None:
        th = K.TWO_PI * np.arange(grid) / grid
        phi = np.asarray(self.phi(th), dtype=float)
        psi = np.asarray(self.psi(th), dtype=float)
        h = K.TWO_PI / grid
        dphi = (np.roll(phi, -1) - np.roll(phi, 1)) / (2 * h)
        d2phi = (np.roll(phi, -1) - 2 * phi + np.roll(phi, 1)) / (h * h)
        on_supp = np.abs(psi) > 0
        # ignore the wrap jump of charts like the identity angle
        jump = np.abs(np.roll(phi, -1) - phi) > math.pi
        ok = on_supp & ~jump & ~np.roll(jump, 1)
        bad = ok & (np.abs(dphi) < 1.0 / self.c - 1e-9)
        if bad.any():
            th_bad = th[bad][:5]
            raise ValueError(f"|phi'| < 1/c on supp(psi) near theta = {th_bad}")
        smooth = ~jump & ~np.roll(jump, 1)
        c2 = max(np.max(np.abs(phi[smooth])), np.max(np.abs(dphi[smooth])),
                 np.max(np.abs(d2phi[smooth])))
        if c2 > self.c * (1 + 1e-6):
            raise ValueError(f"C^2 bound {c2:.3g} exceeds c = {self.c}")


def oscillatory_integral(query: OscillatoryQuery,
                         nu_sample: StationarySample) -> tuple[complex, float]:
    query.verify()
    theta = nu_sample.angles()
    phi_vals = np.asarray(query.phi(theta), dtype=float)
    psi_vals = np.asarray(query.psi(theta), dtype=float)
    val = _osc_mean(theta, query.k, phi_vals, psi_vals)
    n = theta.size
    spread = np.abs(np.exp(1j * query.k * phi_vals) * psi_vals - val)
    se = float(np.sqrt(np.mean(spread ** 2) / n))
    return val, se


def oscillatory_sweep(query: OscillatoryQuery, nu_sample: StationarySample,
                      k_list) -> list[tuple[float, complex, float]]:
    out = []
    for k in k_list:
        q = OscillatoryQuery(phi=query.phi, psi=query.psi, c=query.c, k=float(k))
        val, se = oscillatory_integral(q, nu_sample)
        out.append((float(k), val, se))
    return out


# ----------------------------------------------------------------------------
# Crossing decomposition identity.


@dataclass(frozen=True)
class DecompReport:
    lhs: complex
    rhs: complex
    se_lhs: float
    se_rhs: float
    t: float
    n_crossings: int
    tail_bound_proxy: float


def decomp_check(f, t: float, sampler: TrajectorySampler, N: int,
                 gamma_hint: float | None = None,
                 burn_in: int = 200) -> DecompReport:
    """Check integral of f d(nu) against the difference of the two crossing
    averages: up-crossing words minus down-crossing words, applied through
    their inverses to independent stationary starts.

    Crossing words are harvested from trajectories of the inversion-reversed
    measure; the word inverse acts through the adjugate, which shares the
    running scale.
    """
    if not (t > 0):
        raise ValueError("t must be positive")
    nu = walk_mod.empirical_measure(sampler, burn_in, N)
    theta = nu.angles()
    fx = np.asarray(f(theta))
    lhs = complex(np.mean(fx))
    se_lhs = float(np.sqrt(np.mean(np.abs(fx - lhs) ** 2) / N))

    rev = TrajectorySampler(model_mod.reverse(sampler.measure),
                            sampler.seed ^ 0x5F5E1, sampler.stream_count)
    gamma = gamma_hint if gamma_hint is not None else sampler.calibrated_gamma()
    batch = renewal_mod.crossing_sampler(rev, t, "both", "lognorm", None, N,
                                         gamma_hint=gamma)
    per = np.zeros(N, dtype=complex)
    if len(batch):
        inv_words = K.adj2(batch.B)
        starts = nu.vectors[batch.traj]
        img = K.matvec2(inv_words, starts)
        vals = np.asarray(f(K.theta_from_vecs(img))) * batch.sign
        np.add.at(per, batch.traj, vals)
    rhs = complex(np.mean(per))
    se_rhs = float(np.sqrt(np.mean(np.abs(per - rhs) ** 2) / N))
    return DecompReport(lhs=lhs, rhs=rhs, se_lhs=se_lhs, se_rhs=se_rhs, t=t,
                        n_crossings=len(batch),
                        tail_bound_proxy=batch.tail_bound_proxy)


# ----------------------------------------------------------------------------
# Phase comparison along crossing words.
#
# For a crossing word g (a product of reversed-measure atoms) and separated
# base points x0, y0, compare the exact pair-correlation phase
#     Gamma(g) = exp(i k [phi(g^-1 x0) - phi(g^-1 y0)]) psi(g^-1 x0) psi(g^-1 y0)
# with its geometric approximation
#     Lambda(g) = exp(i k sgn(g x0, x0, y0) phi'(g^-1 x0) d(x0, y0)
#                     / (|g|^2 d(g x0, x0) d(g x0, y0))) psi^2(g^-1 x0).
# Both phases are assembled in log space: the angle difference between
# g^-1 x0 and g^-1 y0 is det(g)-exact and the products k * (tiny angle)
# stay O(e^s), so no catastrophic cancellation occurs even for k = e^(2t+s).


@dataclass(frozen=True)
class PhaseStats:
    s: float
    k_log: float
    good_fraction: float
    n_good: int
    mean_gap: float
    max_gap: float


@dataclass(frozen=True)
class PhaseComparison:
    t: float
    n_crossings: int
    at_s: PhaseStats
    at_s_hi: PhaseStats


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(math.pi * x)


def default_psi(theta):
    """C^1 plateau bump supported inside (0.5, 5.8), away from the chart wrap."""
    theta = np.asarray(theta, dtype=float)
    up = _smoothstep((theta - 0.5) / 0.7)
    down = _smoothstep((5.8 - theta) / 0.5)
    return up * down


def _phase_stats(batch, s: float, t: float, x0: ProjPoint, y0: ProjPoint,
                 phi, dphi, psi) -> PhaseStats:
    k_log = 2.0 * t + s
    d_x0y0 = float(K.proj_dist_vecs(x0.v, y0.v))
    if not (d_x0y0 > math.exp(-s / 9.0)):
        raise ValueError("base points too close: need d(x0, y0) > exp(-s/9)")
    if len(batch) == 0:
        return PhaseStats(s=s, k_log=k_log, good_fraction=0.0, n_good=0,
                          mean_gap=math.nan, max_gap=math.nan)
    B = batch.B
    ls = batch.logscale
    lognorm = batch.lognorm
    jump = np.abs(batch.lognorm - batch.prev_lognorm)

    x0v = np.broadcast_to(x0.v, (len(batch), 2))
    y0v = np.broadcast_to(y0.v, (len(batch), 2))
    gx0 = K.matvec2(B, x0.v)
    th_gx0 = K.theta_from_vecs(gx0)
    d_gx0_x0 = K.proj_dist_vecs(gx0, x0v)
    d_gx0_y0 = K.proj_dist_vecs(gx0, y0v)

    # log d(g x0, z_max(g)) through the singular frame, cancellation-free:
    # d = |<v_min, x0>| / (|g| |g x0|) for the unit representative of x0
    v1 = K.right_singular_top(B)
    sigma_x0 = ls + 0.5 * np.log(np.sum(K.matvec2(B, x0.v) ** 2, axis=-1))
    with np.errstate(divide="ignore"):
        log_d_zmax = np.log(np.abs(K.cross2(x0v, v1))) - sigma_x0 - lognorm
    # det(B e^ls) = 1, so log det B = -2 ls exactly; immune to underflow
    log_detB = -2.0 * ls

    good = ((jump < s / 9.0) & (log_d_zmax < -t)
            & (d_gx0_x0 > 2.0 * math.exp(-s / 9.0))
            & (d_gx0_y0 > 2.0 * math.exp(-s / 9.0)))
    frac = float(np.count_nonzero(good)) / len(batch)
    if not good.any():
        return PhaseStats(s=s, k_log=k_log, good_fraction=frac, n_good=0,
                          mean_gap=math.nan, max_gap=math.nan)

    Bg = B[good]
    lsg = ls[good]
    lng = lognorm[good]
    back_x = K.matvec2(K.adj2(Bg), x0.v)
    back_y = K.matvec2(K.adj2(Bg), y0.v)
    th_bx = K.theta_from_vecs(back_x)
    th_by = K.theta_from_vecs(back_y)
    nx = np.sqrt(np.sum(back_x * back_x, axis=-1))
    ny = np.sqrt(np.sum(back_y * back_y, axis=-1))
    cross_y0x0 = float(K.cross2(y0.v, x0.v))
    # |theta(g^-1 x0) - theta(g^-1 y0)| = 2 |det B| |det(y0, x0)| / (nx ny)
    # up to O(delta^3); the sign needs the half-plane parity of the raw image
    # vectors, because the angle chart identifies v with -v
    log_abs_dtheta = (math.log(2.0) + log_detB[good]
                      + math.log(abs(cross_y0x0)) - np.log(nx) - np.log(ny))
    opposite = (back_x[..., 1] < 0.0) != (back_y[..., 1] < 0.0)
    sign_dtheta = math.copysign(1.0, cross_y0x0) * np.where(opposite, -1.0, 1.0)
    phase_gamma = (sign_dtheta * np.asarray(dphi(th_by), dtype=float)
                   * np.exp(k_log + log_abs_dtheta))
    gamma_val = (np.exp(1j * phase_gamma)
                 * np.asarray(psi(th_bx), dtype=float)
                 * np.asarray(psi(th_by), dtype=float))

    # triple orientation of (g x0, x0, y0); our chart runs the circle in the
    # sense that makes the preimage pair's signed angle gap equal MINUS this
    # orientation, so the approximate phase carries the chart-consistent sign
    sgn = -np.where(
        ((chart(x0) - th_gx0[good]) % K.TWO_PI)
        < ((chart(y0) - th_gx0[good]) % K.TWO_PI), 1.0, -1.0)
    # the chart also sends metric infinitesimals to 2x angle increments,
    # hence the log 2 matching the exact angle-difference phase above
    with np.errstate(divide="ignore"):
        log_abs_lam = (k_log + math.log(2.0) - 2.0 * lng + math.log(d_x0y0)
                       - np.log(d_gx0_x0[good]) - np.log(d_gx0_y0[good]))
    phase_lambda = sgn * np.asarray(dphi(th_bx), dtype=float) * np.exp(log_abs_lam)
    lambda_val = np.exp(1j * phase_lambda) * np.asarray(psi(th_bx), dtype=float) ** 2

    gap = np.abs(gamma_val - lambda_val)
    return PhaseStats(s=s, k_log=k_log, good_fraction=frac,
                      n_good=int(np.count_nonzero(good)),
                      mean_gap=float(gap.mean()), max_gap=float(gap.max()))


def gamma_lambda_compare(x0: ProjPoint, y0: ProjPoint, t: float, s: float,
                         sampler: TrajectorySampler, N: int,
                         phi=None, dphi=None, psi=None,
                         s_hi: float | None = None,
                         gamma_hint: float | None = None) -> PhaseComparison:
    """Harvest upward norm crossings of level t from the reversed walk and
    compare the exact and approximate phases on the well-separated subset,
    at scale s and at a larger scale for decay comparison.

    The asymptotic regime has t far beyond any computable horizon; here (s, t)
    are free knobs and the well-separated subset is defined exactly as in the
    asymptotic statement, whose separation radius 2 exp(-s/9) only drops below
    the diameter 1 once s > 9 log 2.
    """
    if phi is None:
        phi, dphi = (lambda th: th), (lambda th: np.ones_like(np.asarray(th)))
    elif dphi is None:
        raise ValueError("a custom phi needs its derivative dphi")
    psi = psi if psi is not None else default_psi
    s_hi = s_hi if s_hi is not None else 2.0 * s
    rev = TrajectorySampler(model_mod.reverse(sampler.measure),
                            sampler.seed ^ 0x6A09E, sampler.stream_count)
    batch = renewal_mod.crossing_sampler(rev, t, "+", "lognorm", None, N,
                                         gamma_hint=gamma_hint)
    if len(batch) == 0:
        raise RuntimeError("no crossings harvested; t is too small")
    return PhaseComparison(
        t=t, n_crossings=len(batch),
        at_s=_phase_stats(batch, s, t, x0, y0, phi, dphi, psi),
        at_s_hi=_phase_stats(batch, s_hi, t, x0, y0, phi, dphi, psi),
    )


# ----------------------------------------------------------------------------
# Regularity profile.


def regularity_profile(nu_sample: StationarySample, r_list,
                       center_count: int = 256, p: float = 2.0) -> list[dict]:
    """Supremum over grid centers of the empirical ball mass, per radius,
    with the ratio column mass * |log r|^(p-1)."""
    theta = np.sort(nu_sample.angles())
    n = theta.size
    centers = K.TWO_PI * np.arange(center_count) / center_count
    rows = []
    for r in r_list:
        r = float(r)
        if not (0.0 < r <= 1.0):
            raise ValueError("radii must lie in (0, 1]")
        if r >= 1.0:
            sup_mass = 1.0
        else:
            half = 2.0 * math.asin(r)  # theta half-width of a radius-r ball
            lo = (centers - half) % K.TWO_PI
            hi = (centers + half) % K.TWO_PI
            lo_idx = np.searchsorted(theta, lo, side="left")
            hi_idx = np.searchsorted(theta, hi, side="right")
            wraps = lo > hi
            counts = np.where(wraps, (n - lo_idx) + hi_idx, hi_idx - lo_idx)
            sup_mass = float(counts.max()) / n
        ratio = sup_mass * abs(math.log(r)) ** (p - 1.0) if r < 1.0 else sup_mass
        rows.append({"r": r, "sup_mass": sup_mass, "ratio": ratio})
    return rows
