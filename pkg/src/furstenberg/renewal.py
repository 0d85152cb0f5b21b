"""Monte Carlo evaluation of renewal-type operators along matrix-product
trajectories, their closed-form large-threshold limits, and samplers for the
level-crossing word sets.

Kinds
-----
R      sum over n >= 0 of f(g x, sigma_g(x) - t), g ~ n-fold products
L      same with log|g| in place of the cocycle and the index range
       restricted to [ceil(2t/3gamma), floor(2t/gamma)]
E      one extra independent step h appended: f(hgx, sigma_h(gx), sigma_g(x)-t)
E1+/-  E restricted to the step where the cocycle first jumps across t
       upward (resp. downward)
E2+/-  norm-level crossings, run with the inversion-reversed measure and a
       second start point fed through the inverse word

Per-trajectory sums realize the sum over n with one reused stream; identical
in expectation to independent products per n and far cheaper.  The extra step
of the E-family is integrated exactly over the finitely many atoms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import model as model_mod
from .model import GeneratorMeasure
from .proj2 import Mat2, ProjPoint
from .walk import StationarySample, TrajectorySampler, _block_count, _iter_index_chunks

KINDS = ("R", "L", "E", "E1+", "E1-", "E2+", "E2-")
_RENORM_EVERY = 16


class TruncationDominatedError(RuntimeError):
    """Truncated tail mass dwarfs the statistical error."""


@dataclass(frozen=True)
class RenewalQuery:
    """A renewal evaluation request.

    The target f must be numpy-vectorized; its arity depends on the kind:
    (theta_y, u) for R/L, (theta_y, v, u) for E/E1+-, and
    (theta_check, theta_y, v, u) for E2+-.  u_support bounds the u-window
    where f can be non-zero; it drives truncation and quadrature.
    """

    kind: str
    f: object
    u_support: tuple[float, float]
    x: ProjPoint
    t: float
    xcheck: ProjPoint | None = None
    n_max: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        lo, hi = self.u_support
        if not (lo <= hi):
            raise ValueError("empty u-support window")
        if self.kind in ("E2+", "E2-") and self.xcheck is None:
            raise ValueError(f"kind {self.kind} needs the second start point xcheck")


@dataclass(frozen=True)
class RenewalEstimate:
    value: float
    se: float
    n_max_used: int
    tail_bound_proxy: float
    N: int


@dataclass(frozen=True)
class CrossingSample:
    n: int
    word_scaled: np.ndarray
    log_scale: float
    overshoot: float
    jump: float
    direction: str

    @property
    def word(self) -> Mat2:
        m = self.word_scaled * math.exp(self.log_scale)
        if not np.isfinite(m).all():
            raise OverflowError("word norm exceeds float range; "
                                "use word_scaled and log_scale")
        return Mat2(m)


@dataclass
class CrossingBatch:
    """Struct-of-arrays crossing harvest; iterates as CrossingSample records.

    B holds the product matrices scaled to unit max entry; the true word is
    B * exp(logscale).  sign is +1 for upward, -1 for downward crossings.
    """

    traj: np.ndarray
    n: np.ndarray
    B: np.ndarray
    logscale: np.ndarray
    lognorm: np.ndarray
    prev_lognorm: np.ndarray
    sign: np.ndarray
    n_traj: int
    n_max_used: int
    tail_bound_proxy: float
    t: float

    def __len__(self) -> int:
        return self.traj.size

    def __iter__(self):
        for i in range(len(self)):
            yield CrossingSample(
                n=int(self.n[i]),
                word_scaled=self.B[i],
                log_scale=float(self.logscale[i]),
                overshoot=float(self.lognorm[i] - self.t),
                jump=float(self.lognorm[i] - self.prev_lognorm[i]),
                direction="+" if self.sign[i] > 0 else "-",
            )

    def select(self, mask: np.ndarray) -> "CrossingBatch":
        return CrossingBatch(
            traj=self.traj[mask], n=self.n[mask], B=self.B[mask],
            logscale=self.logscale[mask], lognorm=self.lognorm[mask],
            prev_lognorm=self.prev_lognorm[mask], sign=self.sign[mask],
            n_traj=self.n_traj, n_max_used=self.n_max_used,
            tail_bound_proxy=self.tail_bound_proxy, t=self.t,
        )


def _resolve_gamma(sampler: TrajectorySampler, gamma_hint) -> float:
    gamma = gamma_hint if gamma_hint is not None else sampler.calibrated_gamma()
    if not (gamma > 0):
        raise ValueError(f"growth-rate estimate must be positive, got {gamma}")
    return gamma


def _horizon(t: float, u_lo: float, u_hi: float, gamma: float,
             override: int | None) -> int:
    if override is not None:
        return int(override)
    base = 2.0 * max(t + max(u_hi, 0.0), 0.0) / gamma
    margin = (abs(u_lo) + abs(u_hi) + 10.0) / gamma
    return int(math.ceil(base + margin)) + 30


def _max_atom_lognorm(measure: GeneratorMeasure) -> float:
    return max(math.log(g.norm) for g in measure.matrices)


def _atom_images(atoms: np.ndarray, w: np.ndarray):
    """For each atom a: (theta(a w), sigma_a(w)) over the column batch w."""
    out = []
    for a in atoms:
        hw = K.matvec2(a[None, :, :], w)
        nh = np.sqrt(np.sum(hw * hw, axis=-1))
        out.append((K.theta_from_vecs(hw), np.log(nh)))
    return out


# ----------------------------------------------------------------------------
# Engines.


def _cocycle_engine(sampler: TrajectorySampler, query: RenewalQuery, N: int,
                    gamma: float) -> tuple[np.ndarray, float, int]:
    """Per-trajectory sums for the cocycle-driven kinds R, E, E1+, E1-."""
    kind = query.kind
    measure = sampler.measure
    atoms = measure.matrix_array()
    weights = measure.weights
    lmax = _max_atom_lognorm(measure)
    u_lo, u_hi = query.u_support
    if kind == "E1+":
        u_lo, u_hi = max(u_lo, -lmax), min(u_hi, 0.0)
    elif kind == "E1-":
        u_lo, u_hi = max(u_lo, 0.0), min(u_hi, lmax)
    t = query.t
    n_steps = _horizon(t, u_lo, u_hi, gamma, query.n_max)
    width = sampler.stream_count
    Y_parts, active_parts = [], []

    def run_block(block: int):
        cols = min(width, N - block * width)
        w = np.broadcast_to(query.x.v.astype(float), (cols, 2)).copy()
        sigma = np.zeros(cols)
        Y = np.zeros(cols)

        def absorb():
            u = sigma - t
            mask = (u >= u_lo) & (u <= u_hi)
            if not mask.any():
                return
            um = u[mask]
            wm = w[mask]
            if kind == "R":
                Y[mask] += query.f(K.theta_from_vecs(wm), um)
                return
            for wt, (th_h, sig_h) in zip(weights, _atom_images(atoms, wm)):
                if kind == "E":
                    Y[mask] += wt * query.f(th_h, sig_h, um)
                elif kind == "E1+":
                    sel = (um >= -sig_h) & (um < 0.0)
                    if sel.any():
                        add = np.zeros(um.size)
                        add[sel] = wt * query.f(th_h[sel], sig_h[sel], um[sel])
                        Y[mask] += add
                else:  # E1-
                    sel = (um >= 0.0) & (um < -sig_h)
                    if sel.any():
                        add = np.zeros(um.size)
                        add[sel] = wt * query.f(th_h[sel], sig_h[sel], um[sel])
                        Y[mask] += add

        absorb()  # n = 0, the identity word
        done = 0
        for idx in _iter_index_chunks(sampler, K.NS_RENEWAL, block, n_steps):
            for row in idx:
                g = atoms[row[:cols]]
                wv = K.matvec2(g, w)
                s = np.sqrt(np.sum(wv * wv, axis=-1, keepdims=True))
                w = wv / s
                sigma = sigma + np.log(s[:, 0])
                absorb()
                done += 1
        active = np.count_nonzero(sigma - t <= u_hi + (lmax if kind != "R" else 0.0))
        return Y, active

    for block in range(_block_count(N, width)):
        Y, active = run_block(block)
        Y_parts.append(Y)
        active_parts.append(active)
    Yall = np.concatenate(Y_parts)[:N]
    proxy = float(sum(active_parts)) / N
    return Yall, proxy, n_steps


def _norm_engine(sampler: TrajectorySampler, query: RenewalQuery, N: int,
                 gamma: float) -> tuple[np.ndarray, float, int]:
    """Per-trajectory sums for the norm-driven kinds L, E2+, E2-.

    For the E2 family the engine walks with the inversion-reversed measure
    and applies inverse words to the second start point through the adjugate,
    which shares the running scale exactly.
    """
    kind = query.kind
    if kind in ("E2+", "E2-"):
        engine_measure = model_mod.reverse(sampler.measure)
    else:
        engine_measure = sampler.measure
    engine_sampler = TrajectorySampler(engine_measure, sampler.seed,
                                       sampler.stream_count)
    atoms = engine_measure.matrix_array()
    weights = engine_measure.weights
    adj_atoms = K.adj2(atoms)
    lmax = _max_atom_lognorm(engine_measure)
    t = query.t
    if kind == "L":
        n_lo = max(int(math.ceil(2.0 * t / (3.0 * gamma))), 0)
        n_hi = int(math.floor(2.0 * t / gamma))
        n_steps = max(n_hi, 0)
        u_lo, u_hi = query.u_support
    else:
        u_lo, u_hi = -lmax, lmax
        n_steps = _horizon(t, u_lo, u_hi, gamma, query.n_max)
    width = sampler.stream_count
    xv = query.x.v.astype(float)
    xc = query.xcheck.v.astype(float) if query.xcheck is not None else None
    Y_parts, active_parts = [], []

    def run_block(block: int):
        cols = min(width, N - block * width)
        B = np.broadcast_to(np.eye(2), (cols, 2, 2)).copy()
        logscale = np.zeros(cols)
        Y = np.zeros(cols)
        step = 0

        def lognorm_of(M, ls):
            return ls + np.log(K.opnorm2(M))

        def absorb_L(lognorm):
            u = lognorm - t
            mask = (u >= u_lo) & (u <= u_hi)
            if not mask.any():
                return
            w = K.matvec2(B[mask], xv)
            Y[mask] += query.f(K.theta_from_vecs(w), u[mask])

        def absorb_E2(lognorm):
            u = lognorm - t
            if kind == "E2+":
                mask = (u >= -lmax) & (u < 0.0)
            else:
                mask = (u >= 0.0) & (u < lmax)
            if not mask.any():
                return
            Bm = B[mask]
            lsm = logscale[mask]
            um = u[mask]
            for wt, h, adj_h in zip(weights, atoms, adj_atoms):
                hB = K.matmul2(h[None, :, :], Bm)
                lognorm_h = lsm + np.log(K.opnorm2(hB))
                if kind == "E2+":
                    sel = lognorm_h >= t
                else:
                    sel = lognorm_h < t
                if not sel.any():
                    continue
                hBs = hB[sel]
                wy = K.matvec2(hBs, xv)
                wc = K.matvec2(K.adj2(hBs), xc)
                v = lognorm_h[sel] - (um[sel] + t)  # log |hg| - log |g|
                add = np.zeros(um.size)
                add[sel] = wt * query.f(K.theta_from_vecs(wc),
                                        K.theta_from_vecs(wy), v, um[sel])
                Y[mask] += add

        lognorm = lognorm_of(B, logscale)
        if kind == "L":
            if n_lo == 0:
                absorb_L(lognorm)
        else:
            absorb_E2(lognorm)
        for idx in _iter_index_chunks(engine_sampler, K.NS_RENEWAL, block, n_steps):
            for row in idx:
                B = K.matmul2(atoms[row[:cols]], B)
                step += 1
                if step % _RENORM_EVERY == 0:
                    K.renorm_inplace(B, logscale)
                lognorm = lognorm_of(B, logscale)
                if kind == "L":
                    if n_lo <= step <= n_hi:
                        absorb_L(lognorm)
                else:
                    absorb_E2(lognorm)
        if kind == "L":
            active = 0
        elif kind == "E2+":
            active = int(np.count_nonzero(lognorm < t))
        else:
            active = int(np.count_nonzero(lognorm < t + lmax + 5.0))
        return Y, active

    for block in range(_block_count(N, width)):
        Y, active = run_block(block)
        Y_parts.append(Y)
        active_parts.append(active)
    Yall = np.concatenate(Y_parts)[:N]
    proxy = float(sum(active_parts)) / N
    return Yall, proxy, n_steps


def estimate(query: RenewalQuery, sampler: TrajectorySampler, N: int,
             gamma_hint: float | None = None) -> RenewalEstimate:
    """Unbiased-at-truncation Monte Carlo mean over N trajectories."""
    if N < 2:
        raise ValueError("need N >= 2")
    gamma = _resolve_gamma(sampler, gamma_hint)
    if query.kind == "L" and query.t < 3.0 * gamma:
        raise ValueError("the truncated-norm kind needs t >= 3 gamma")
    if query.kind in ("R", "E", "E1+", "E1-"):
        Y, proxy, used = _cocycle_engine(sampler, query, N, gamma)
    else:
        Y, proxy, used = _norm_engine(sampler, query, N, gamma)
    value = float(np.mean(Y))
    se = float(np.std(Y, ddof=1) / math.sqrt(N))
    if proxy > max(10.0 * se, 1e-12):
        raise TruncationDominatedError(
            f"tail proxy {proxy:.3g} exceeds 10 x se = {10 * se:.3g}; "
            "raise the horizon or t")
    return RenewalEstimate(value=value, se=se, n_max_used=used,
                           tail_bound_proxy=proxy, N=N)


# ----------------------------------------------------------------------------
# Closed-form limits, evaluated against empirical stationary samples.


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _integrate_u(f_of_u, lo: np.ndarray, hi: np.ndarray):
    """Gauss-Legendre integral of f over [lo, hi] rows; f maps (rows, nodes)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    U = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = f_of_u(U)
    return (vals @ _GL_WEIGHTS) * half


def limit(query: RenewalQuery, nu_sample: StationarySample,
          nu_check_sample: StationarySample | None, mu: GeneratorMeasure,
          gamma_hat: float) -> RenewalEstimate:
    """The kind-appropriate large-t limit functional.

    Monte Carlo over the stationary sample(s), an exact sum over the atoms,
    and Gauss-Legendre quadrature in u.  The reported se is the stationary
    sampling error; it excludes the quadrature, which is effectively exact
    for smooth targets.
    """
    if not (gamma_hat > 0):
        raise ValueError("gamma_hat must be positive")
    kind = query.kind
    if kind == "L":
        raise ValueError("the truncated-norm kind has no closed-form limit here")
    th_y = nu_sample.angles()
    u_lo, u_hi = query.u_support
    t = query.t

    if kind == "R":
        lo = max(-t, u_lo)
        if lo >= u_hi:
            per = np.zeros(th_y.size)
        else:
            per = _integrate_u(lambda U: query.f(th_y[:, None], U),
                               np.full(th_y.size, lo), np.full(th_y.size, u_hi))
    elif kind == "E":
        vecs = nu_sample.vectors
        per = np.zeros(th_y.size)
        lo = max(-t, u_lo)
        if lo < u_hi:
            for (mat, wt) in mu.atoms:
                hw = K.matvec2(mat.m[None, :, :], vecs)
                sig = 0.5 * np.log(np.sum(hw * hw, axis=-1))
                th_h = K.theta_from_vecs(hw)
                per += wt * _integrate_u(
                    lambda U: query.f(th_h[:, None], sig[:, None], U),
                    np.full(th_y.size, lo), np.full(th_y.size, u_hi))
    elif kind in ("E1+", "E1-"):
        vecs = nu_sample.vectors
        per = np.zeros(th_y.size)
        for (mat, wt) in mu.atoms:
            hw = K.matvec2(mat.m[None, :, :], vecs)
            sig = 0.5 * np.log(np.sum(hw * hw, axis=-1))
            th_h = K.theta_from_vecs(hw)
            if kind == "E1+":
                lo, hi = -np.maximum(sig, 0.0), np.zeros_like(sig)
            else:
                lo, hi = np.zeros_like(sig), np.maximum(-sig, 0.0)
            per += wt * _integrate_u(
                lambda U: query.f(th_h[:, None], sig[:, None], U), lo, hi)
    else:  # E2+, E2-
        if nu_check_sample is None:
            raise ValueError("the E2 kinds need the reversed stationary sample")
        mu_rev = model_mod.reverse(mu)
        m = min(len(nu_sample), len(nu_check_sample))
        th_check = nu_sample.angles()[:m]          # distributed as nu
        vecs_y = nu_check_sample.vectors[:m]       # distributed as nu-reversed
        per = np.zeros(m)
        for (mat, wt) in mu_rev.atoms:
            hw = K.matvec2(mat.m[None, :, :], vecs_y)
            sig = 0.5 * np.log(np.sum(hw * hw, axis=-1))
            th_h = K.theta_from_vecs(hw)
            if kind == "E2+":
                lo, hi = -np.maximum(sig, 0.0), np.zeros_like(sig)
            else:
                lo, hi = np.zeros_like(sig), np.maximum(-sig, 0.0)
            per += wt * _integrate_u(
                lambda U: query.f(th_check[:, None], th_h[:, None],
                                  sig[:, None], U), lo, hi)

    per = per / gamma_hat
    value = float(np.mean(per))
    se = float(np.std(per, ddof=1) / math.sqrt(per.size))
    return RenewalEstimate(value=value, se=se, n_max_used=0,
                           tail_bound_proxy=0.0, N=per.size)


# ----------------------------------------------------------------------------
# Crossing harvest.


def crossing_sampler(sampler: TrajectorySampler, t: float, direction: str,
                     monitored: str, x: ProjPoint | None, N: int,
                     gamma_hint: float | None = None,
                     n_max: int | None = None) -> CrossingBatch:
    """All level-t crossings of the monitored functional along N trajectories.

    direction is '+', '-', or 'both'; monitored is 'lognorm' or 'cocycle'
    (the latter needs the start point x).  Every crossing index up to the
    horizon is emitted, so one trajectory can contribute several records.
    """
    if direction not in ("+", "-", "both"):
        raise ValueError("direction must be '+', '-' or 'both'")
    if monitored not in ("lognorm", "cocycle"):
        raise ValueError("monitored must be 'lognorm' or 'cocycle'")
    if monitored == "cocycle" and x is None:
        raise ValueError("cocycle monitoring needs the start point x")
    gamma = _resolve_gamma(sampler, gamma_hint)
    lmax = _max_atom_lognorm(sampler.measure)
    n_steps = (int(n_max) if n_max is not None
               else int(math.ceil(2.0 * max(t, 0.0) / gamma
                                  + (lmax + 10.0) / gamma)) + 30)
    atoms = sampler.measure.matrix_array()
    width = sampler.stream_count
    xv = x.v.astype(float) if x is not None else None

    recs = {k: [] for k in ("traj", "n", "B", "logscale", "cur", "prev", "sign")}
    still_below = 0

    for block in range(_block_count(N, width)):
        cols = min(width, N - block * width)
        base_id = block * width
        B = np.broadcast_to(np.eye(2), (cols, 2, 2)).copy()
        logscale = np.zeros(cols)
        if monitored == "cocycle":
            w = np.broadcast_to(xv, (cols, 2)).copy()
            sigma = np.zeros(cols)
            prev = sigma.copy()
        else:
            prev = np.zeros(cols)
        step = 0
        for idx in _iter_index_chunks(sampler, K.NS_CROSSING, block, n_steps):
            for row in idx:
                g = atoms[row[:cols]]
                B = K.matmul2(g, B)
                step += 1
                if step % _RENORM_EVERY == 0:
                    K.renorm_inplace(B, logscale)
                if monitored == "cocycle":
                    wv = K.matvec2(g, w)
                    s = np.sqrt(np.sum(wv * wv, axis=-1, keepdims=True))
                    w = wv / s
                    sigma = sigma + np.log(s[:, 0])
                    cur = sigma
                else:
                    cur = logscale + np.log(K.opnorm2(B))
                up = (prev < t) & (cur >= t)
                dn = (cur < t) & (prev >= t)
                if direction == "+":
                    dn = np.zeros_like(dn)
                elif direction == "-":
                    up = np.zeros_like(up)
                hit = up | dn
                if hit.any():
                    ids = np.nonzero(hit)[0]
                    recs["traj"].append(base_id + ids)
                    recs["n"].append(np.full(ids.size, step, dtype=np.intp))
                    recs["B"].append(B[ids].copy())
                    recs["logscale"].append(logscale[ids].copy())
                    recs["cur"].append(cur[ids].copy())
                    recs["prev"].append(prev[ids].copy())
                    recs["sign"].append(np.where(up[ids], 1, -1))
                prev = cur.copy()
        still_below += int(np.count_nonzero(prev < t))

    def cat(key, dtype=float):
        if recs[key]:
            return np.concatenate(recs[key])
        shape = (0, 2, 2) if key == "B" else (0,)
        return np.zeros(shape, dtype=dtype)

    return CrossingBatch(
        traj=cat("traj", np.intp), n=cat("n", np.intp), B=cat("B"),
        logscale=cat("logscale"), lognorm=cat("cur"), prev_lognorm=cat("prev"),
        sign=cat("sign", int), n_traj=N, n_max_used=n_steps,
        tail_bound_proxy=still_below / N, t=t,
    )


def L_estimate(b: float, x: ProjPoint, t: float, sampler: TrajectorySampler,
               N: int, gamma_hint: float | None = None) -> RenewalEstimate:
    """Truncated norm-renewal mass of the window [-b, b] around level t."""
    if not (b > 0):
        raise ValueError("b must be positive")

    def indicator(theta, u):
        return ((u >= -b) & (u <= b)).astype(float)

    q = RenewalQuery(kind="L", f=indicator, u_support=(-b, b), x=x, t=t)
    return estimate(q, sampler, N, gamma_hint=gamma_hint)
