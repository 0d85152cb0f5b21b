"""Random-walk engine: matrix-product trajectories, Lyapunov/CLT estimation,
stopping times, large-deviation tallies and the empirical stationary measure.

All sampling is replica-addressable through counter-based streams: replica r
of a sampler with stream width W reads column r mod W of the block r // W,
so results are bit-identical for a fixed (seed, stream width, replica) no
matter how work is scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import GeneratorMeasure
from .proj2 import Mat2, ProjPoint

_STEP_CHUNK = 256
_RENORM_EVERY = 16

# calibration run used for truncation horizons when no external estimate is
# supplied; coarse on purpose
_CALIB_N, _CALIB_REPLICAS = 400, 256


class CapExceededError(RuntimeError):
    """A stopping time failed to trigger below its hard cap."""


@dataclass
class TrajectorySampler:
    measure: GeneratorMeasure
    seed: int
    stream_count: int = 4096
    _gamma_cache: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.stream_count < 1:
            raise ValueError("stream_count must be >= 1")
        if not self.measure.real_flag:
            raise ValueError("trajectory sampling expects real generator measures")

    def atoms(self) -> np.ndarray:
        return self.measure.matrix_array()

    def cumweights(self) -> np.ndarray:
        return K.atom_cumweights(self.measure.weights)

    def calibrated_gamma(self) -> float:
        """Cheap cached growth-rate estimate for horizon/cap policies."""
        if self._gamma_cache is None:
            est = estimate_lyapunov_clt(self, _CALIB_N, _CALIB_REPLICAS,
                                        _namespace=K.NS_CALIB)
            self._gamma_cache = est.gamma_hat
        return self._gamma_cache


@dataclass(frozen=True)
class LyapunovEstimate:
    gamma_hat: float
    a2_hat: float
    se_gamma: float
    se_a2: float
    n: int
    N: int


@dataclass(frozen=True)
class StoppingRecord:
    n_t: int
    overshoot: float
    endpoint: ProjPoint


@dataclass(frozen=True)
class DeviationRow:
    event: str
    n: int
    epsilon: float
    fraction: float
    se: float


@dataclass(frozen=True)
class DeviationProfile:
    rows: tuple[DeviationRow, ...]


@dataclass(frozen=True)
class CouplingReport:
    n: int
    l: int
    bound: float
    violation_fraction: float
    max_discrepancy: float
    N: int


@dataclass(frozen=True)
class StationarySample:
    """Equal-weight sample from the chain x_{k+1} = g_{k+1} x_k.

    Points are unit homogeneous vectors, row per sample.
    """

    vectors: np.ndarray
    seed: int
    burn_in: int

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def angles(self) -> np.ndarray:
        return K.theta_from_vecs(self.vectors)

    def points(self):
        return [ProjPoint(v) for v in self.vectors]


DEVIATION_EVENTS = ("norm", "cocycle", "backward_attract", "zm_near", "backward_near")


# ----------------------------------------------------------------------------
# Core block iteration.


def _block_count(N: int, width: int) -> int:
    return (N + width - 1) // width


def _iter_index_chunks(sampler: TrajectorySampler, namespace: int, block: int,
                       n_steps: int):
    """Yield (steps, stream_count) atom-index chunks, sequentially."""
    rng = K.philox_stream(sampler.seed, namespace, block)
    cumw = sampler.cumweights()
    done = 0
    while done < n_steps:
        take = min(_STEP_CHUNK, n_steps - done)
        yield K.draw_indices(rng, take, sampler.stream_count, cumw)
        done += take


def _product_lognorm_block(sampler: TrajectorySampler, namespace: int,
                           block: int, n: int, cols: int | None = None) -> np.ndarray:
    """log |S_n| for the first `cols` replica columns of one block.

    The stream always yields full-width draws so replica randomness does not
    depend on how many columns are consumed.
    """
    atoms = sampler.atoms()
    cols = sampler.stream_count if cols is None else cols
    B = np.broadcast_to(np.eye(2), (cols, 2, 2)).copy()
    logscale = np.zeros(cols)
    step = 0
    for idx in _iter_index_chunks(sampler, namespace, block, n):
        for row in idx:
            B = K.matmul2(atoms[row[:cols]], B)
            step += 1
            if step % _RENORM_EVERY == 0:
                K.renorm_inplace(B, logscale)
    return logscale + np.log(K.opnorm2(B))


# ----------------------------------------------------------------------------
# Operations.


def sample_product(sampler: TrajectorySampler, n: int, replica: int,
                   with_indices: bool = False):
    """Product of n i.i.d. atoms along the replica's stream; n = 0 gives id.

    Returns the matrix, or (matrix, atom-index array) when requested.  Only
    sensible while the product stays inside float range; the estimators below
    use scaled arithmetic instead.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    idxs = trajectory_indices(sampler, n, replica, K.NS_PRODUCT)
    m = np.eye(2)
    for i in idxs:
        m = sampler.atoms()[i] @ m
    if not np.isfinite(m).all():
        raise OverflowError("product left float range; use the scaled estimators")
    out = Mat2(m)
    return (out, idxs) if with_indices else out


def trajectory_indices(sampler: TrajectorySampler, n: int, replica: int,
                       namespace: int = K.NS_PRODUCT) -> np.ndarray:
    """The deterministic atom indices replica would consume for n steps."""
    block, col = divmod(replica, sampler.stream_count)
    out = np.empty(n, dtype=np.intp)
    done = 0
    for idx in _iter_index_chunks(sampler, namespace, block, n):
        out[done:done + idx.shape[0]] = idx[:, col]
        done += idx.shape[0]
    return out


def estimate_lyapunov_clt(sampler: TrajectorySampler, n: int, N: int,
                          _namespace: int = K.NS_PRODUCT) -> LyapunovEstimate:
    """gamma_hat = mean(log|S_n|)/n and a2_hat = var(log|S_n|)/n over N replicas."""
    if n < 1 or N < 2:
        raise ValueError("need n >= 1 and N >= 2")
    width = sampler.stream_count
    blocks = _block_count(N, width)
    parts = K.map_blocks(
        lambda b: _product_lognorm_block(
            sampler, _namespace, b, n, cols=min(width, N - b * width)),
        blocks)
    logs = np.concatenate(parts)[:N]
    mean = float(np.mean(logs))
    var = float(np.var(logs, ddof=1)) if N > 1 else 0.0
    centered2 = (logs - mean) ** 2
    se_var = float(np.std(centered2, ddof=1) / math.sqrt(N)) if N > 2 else 0.0
    return LyapunovEstimate(
        gamma_hat=mean / n,
        a2_hat=var / n,
        se_gamma=math.sqrt(var / N) / n if var > 0 else 0.0,
        se_a2=se_var / n,
        n=n, N=N,
    )


def stopping_time(sampler: TrajectorySampler, x: ProjPoint, t: float,
                  replica: int, gamma_hint: float | None = None) -> StoppingRecord:
    """First n with sigma(S_n, x) > t, with overshoot and endpoint.

    Hard cap ceil(20 t / gamma) + 1000 steps; exceeding it raises, which
    signals a vanishing growth rate or a pathological measure.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    gamma = gamma_hint if gamma_hint is not None else sampler.calibrated_gamma()
    cap = int(math.ceil(20.0 * t / max(gamma, 1e-12))) + 1000 if gamma > 0 else 1000
    atoms = sampler.atoms()
    v = x.v.astype(float).copy()
    sigma = 0.0
    n = 0
    block, col = divmod(replica, sampler.stream_count)
    rng = K.philox_stream(sampler.seed, K.NS_STOPPING, block)
    cumw = sampler.cumweights()
    while n <= cap:
        idx = K.draw_indices(rng, _STEP_CHUNK, sampler.stream_count, cumw)[:, col]
        for i in idx:
            w = atoms[i] @ v
            s = math.sqrt(w[0] * w[0] + w[1] * w[1])
            v = w / s
            sigma += math.log(s)
            n += 1
            if sigma > t:
                return StoppingRecord(n_t=n, overshoot=sigma - t,
                                      endpoint=ProjPoint(v))
            if n > cap:
                break
    raise CapExceededError(
        f"no crossing of t={t} within {cap} steps (gamma estimate {gamma:.3g})")


def deviation_profile(sampler: TrajectorySampler, epsilon: float, n_list,
                      N: int, x: ProjPoint | None = None,
                      y: ProjPoint | None = None,
                      gamma_hint: float | None = None) -> DeviationProfile:
    """Empirical tail fractions for the five large-deviation events.

    Events per word g ~ mu^{*n}: norm and cocycle deviations exceeding
    epsilon n; d(g^{-1}x, z_min(g)) >= exp(-(2 gamma - epsilon) n);
    d(z_min(g), y) <= exp(-epsilon n); d(g^{-1}x, y) <= exp(-epsilon n).
    """
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive")
    x = x if x is not None else ProjPoint([math.cos(1.0), math.sin(1.0)])
    y = y if y is not None else ProjPoint([math.cos(2.0), math.sin(2.0)])
    gamma = gamma_hint if gamma_hint is not None else sampler.calibrated_gamma()
    atoms = sampler.atoms()
    width = sampler.stream_count
    rows = []
    for n in n_list:
        counts = np.zeros(5)
        total = 0
        for block in range(_block_count(N, width)):
            take = min(width, N - block * width)
            B = np.broadcast_to(np.eye(2), (width, 2, 2)).copy()
            logscale = np.zeros(width)
            step = 0
            for idx in _iter_index_chunks(sampler, K.NS_DEVIATION, block, n):
                for row in idx:
                    B = K.matmul2(atoms[row], B)
                    step += 1
                    if step % _RENORM_EVERY == 0:
                        K.renorm_inplace(B, logscale)
            B, logscale = B[:take], logscale[:take]
            lognorm = logscale + np.log(K.opnorm2(B))
            # sigma(S_n, x): scale-free through the normalized product
            wx = K.matvec2(B, x.v)
            sigma = logscale + 0.5 * np.log(np.sum(wx * wx, axis=-1))
            zmax, zmin = K.density_points(B)
            back = K.matvec2(K.adj2(B), x.v)  # g^{-1} x up to scale
            # d(g^{-1}x, z_min) collapses below float resolution for large n;
            # use the exact contraction identity instead:
            #   log d(g^{-1}x, z_min) = log d(x, g z_min) + sigma_g(g^{-1}x)
            #                           + sigma_g(z_min)
            # with sigma_g(z_min) = -log|g| and sigma_g(g^{-1}x) = -sigma_{g^{-1}}(x).
            img_zmin = K.rot90_vec(zmax)  # direction of g z_min
            sig_inv_x = logscale + 0.5 * np.log(np.sum(back * back, axis=-1))
            with np.errstate(divide="ignore"):
                log_d_back_zmin = (
                    np.log(K.proj_dist_vecs(np.broadcast_to(x.v, back.shape), img_zmin))
                    - sig_inv_x - lognorm)
            d_zmin_y = K.proj_dist_vecs(zmin, np.broadcast_to(y.v, zmin.shape))
            d_back_y = K.proj_dist_vecs(back, np.broadcast_to(y.v, back.shape))
            thresh_attract = -(2.0 * gamma - epsilon) * n
            with np.errstate(divide="ignore"):
                counts[0] += np.count_nonzero(np.abs(lognorm - n * gamma) >= epsilon * n)
                counts[1] += np.count_nonzero(np.abs(sigma - n * gamma) >= epsilon * n)
                counts[2] += np.count_nonzero(log_d_back_zmin >= thresh_attract)
                counts[3] += np.count_nonzero(np.log(d_zmin_y) <= -epsilon * n)
                counts[4] += np.count_nonzero(np.log(d_back_y) <= -epsilon * n)
            total += take
        for name, c in zip(DEVIATION_EVENTS, counts):
            frac = c / total
            rows.append(DeviationRow(
                event=name, n=int(n), epsilon=float(epsilon), fraction=float(frac),
                se=float(math.sqrt(max(frac * (1 - frac), 0.0) / total)),
            ))
    return DeviationProfile(rows=tuple(rows))


def coupling_check(sampler: TrajectorySampler, n: int, l: int, x: ProjPoint,
                   N: int, gamma_hint: float | None = None) -> CouplingReport:
    """Fraction of (g2, g1) ~ mu^{*(n-l)} x mu^{*l} violating the additive
    splitting |log|g2 g1| - sigma_{g2}(g1 x) - log|g1|| <= 4 exp(-gamma l),
    plus the largest discrepancy seen.
    """
    if not (1 <= l < n <= 100 * l):
        raise ValueError("need 1 <= l < n <= 100 l")
    gamma = gamma_hint if gamma_hint is not None else sampler.calibrated_gamma()
    bound = 4.0 * math.exp(-gamma * l)
    atoms = sampler.atoms()
    width = sampler.stream_count
    viol = 0
    worst = 0.0
    total = 0
    xv = np.broadcast_to(x.v.astype(float), (width, 2))
    for block in range(_block_count(N, width)):
        take = min(width, N - block * width)
        B = np.broadcast_to(np.eye(2), (width, 2, 2)).copy()
        logscale = np.zeros(width)
        log1 = np.zeros(width)
        sig_part = np.zeros(width)
        step = 0
        for idx in _iter_index_chunks(sampler, K.NS_COUPLING, block, n):
            for row in idx:
                B = K.matmul2(atoms[row], B)
                step += 1
                if step % _RENORM_EVERY == 0:
                    K.renorm_inplace(B, logscale)
                if step == l:
                    log1 = logscale + np.log(K.opnorm2(B))
                    w = K.matvec2(B, xv)
                    sig_part = logscale + 0.5 * np.log(np.sum(w * w, axis=-1))
        lognorm_full = logscale + np.log(K.opnorm2(B))
        # sigma_{g2}(g1 x) = sigma(g2 g1, x) - sigma(g1, x)
        w = K.matvec2(B, xv)
        sig_full = logscale + 0.5 * np.log(np.sum(w * w, axis=-1))
        sig2 = sig_full - sig_part
        disc = np.abs(lognorm_full - sig2 - log1)[:take]
        viol += int(np.count_nonzero(disc > bound))
        worst = max(worst, float(disc.max(initial=0.0)))
        total += take
    return CouplingReport(n=n, l=l, bound=bound,
                          violation_fraction=viol / total,
                          max_discrepancy=worst, N=total)


def empirical_measure(sampler: TrajectorySampler, burn_in: int, N: int,
                      start: ProjPoint | None = None) -> StationarySample:
    """N equal-weight states of the projective chain after burn-in.

    Runs stream_count chains in lockstep and collects states step-major, so
    the output is a pure function of (seed, stream_count, burn_in, N).
    """
    if burn_in < 0 or N < 1:
        raise ValueError("need burn_in >= 0 and N >= 1")
    start = start if start is not None else ProjPoint([1.0, 0.0])
    atoms = sampler.atoms()
    width = sampler.stream_count
    chains = min(width, N)
    v = np.broadcast_to(start.v.astype(float), (width, 2)).copy()
    collect_steps = (N + chains - 1) // chains
    pushes = burn_in + collect_steps - 1
    out = np.empty((collect_steps * chains, 2))
    rng = K.philox_stream(sampler.seed, K.NS_CHAIN, 0)
    cumw = sampler.cumweights()

    def record(state_idx: int) -> None:
        if state_idx >= burn_in:
            j = state_idx - burn_in
            out[j * chains:(j + 1) * chains] = v[:chains]

    record(0)
    state = 0
    while state < pushes:
        take = min(_STEP_CHUNK, pushes - state)
        idx = K.draw_indices(rng, take, width, cumw)
        for row in idx:
            w = K.matvec2(atoms[row], v)
            v = w / np.sqrt(np.sum(w * w, axis=-1, keepdims=True))
            state += 1
            record(state)
    return StationarySample(vectors=out[:N], seed=sampler.seed, burn_in=burn_in)


def ks_distance(theta_a: np.ndarray, theta_b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov distance between angle samples."""
    a = np.sort(np.asarray(theta_a))
    b = np.sort(np.asarray(theta_b))
    grid = np.concatenate([a, b])
    grid.sort()
    ca = np.searchsorted(a, grid, side="right") / a.size
    cb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(ca - cb)))
