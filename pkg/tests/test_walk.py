import math
import os

import numpy as np
import pytest

from furstenberg import model, proj2, walk
from furstenberg.proj2 import E1, ProjPoint
from furstenberg.walk import (TrajectorySampler, empirical_measure,
                              estimate_lyapunov_clt, ks_distance,
                              sample_product, stopping_time)

from conftest import A2_BAND, A2_STAR, GAMMA_BAND, GAMMA_STAR


def diag_sampler(seed=1):
    return TrajectorySampler(model.dirac(proj2.diagonal(2.0)), seed=seed)


def test_product_n_zero_is_identity(sampler):
    assert np.array_equal(sample_product(sampler, 0, 5).m, np.eye(2))


def test_product_power_of_single_atom():
    p = sample_product(diag_sampler(), 3, 2)
    assert np.allclose(p.m, np.diag([8.0, 0.125]), atol=0, rtol=0)


def test_product_fixed_seed_reproducible(sampler):
    a = sample_product(sampler, 64, 17)
    b = sample_product(sampler, 64, 17)
    assert np.array_equal(a.m, b.m)


def test_product_distinct_replicas_differ(sampler):
    a = sample_product(sampler, 16, 0)
    b = sample_product(sampler, 16, 1)
    assert not np.array_equal(a.m, b.m)


def test_lyapunov_deterministic_diagonal():
    est = estimate_lyapunov_clt(diag_sampler(), 10_000, 8)
    assert abs(est.gamma_hat - math.log(2)) <= 1e-12
    assert est.a2_hat == 0.0


def test_lyapunov_rotation_zero():
    s = TrajectorySampler(model.dirac(proj2.rotation(1.0)), seed=2)
    est = estimate_lyapunov_clt(s, 500, 8)
    assert abs(est.gamma_hat) <= 1e-12


def test_lyapunov_benchmark_matches_longrun_oracle(sampler):
    est = estimate_lyapunov_clt(sampler, 4000, 500)
    assert abs(est.gamma_hat - GAMMA_STAR) <= GAMMA_BAND
    assert abs(est.a2_hat - A2_STAR) <= A2_BAND
    assert est.gamma_hat > 0


def test_lyapunov_se_scaling(sampler):
    a = estimate_lyapunov_clt(sampler, 500, 250)
    b = estimate_lyapunov_clt(sampler, 500, 1000)
    # quadrupling N roughly halves the error bar
    assert b.se_gamma == pytest.approx(a.se_gamma / 2.0, rel=0.35)


def test_determinism_across_thread_counts(test_mu):
    s = TrajectorySampler(test_mu, seed=42)
    old = os.environ.get("FURSTENBERG_THREADS")
    try:
        os.environ["FURSTENBERG_THREADS"] = "1"
        e1 = estimate_lyapunov_clt(s, 300, 6000)
        os.environ["FURSTENBERG_THREADS"] = "4"
        e4 = estimate_lyapunov_clt(s, 300, 6000)
    finally:
        if old is None:
            os.environ.pop("FURSTENBERG_THREADS", None)
        else:
            os.environ["FURSTENBERG_THREADS"] = old
    assert e1 == e4  # bit-identical reduction regardless of worker count


def test_stopping_time_deterministic():
    rec = stopping_time(diag_sampler(), E1, 1.0, 0, gamma_hint=math.log(2))
    assert rec.n_t == 2
    assert rec.overshoot == pytest.approx(2 * math.log(2) - 1.0, abs=1e-12)
    assert rec.endpoint == E1


def test_stopping_time_t_zero():
    rec = stopping_time(diag_sampler(), E1, 0.0, 0, gamma_hint=math.log(2))
    assert rec.n_t == 1


def test_stopping_time_mean_matches_renewal_rate(sampler, gamma_ref):
    t = 20.0 * gamma_ref
    ns = [stopping_time(sampler, proj2.point(0.4), t, r, gamma_hint=gamma_ref).n_t
          for r in range(300)]
    mean = float(np.mean(ns))
    se = float(np.std(ns) / math.sqrt(len(ns)))
    assert abs(mean - t / gamma_ref) <= 3 * se + 1.5


def test_stopping_invariant(sampler, gamma_ref):
    t = 3.0
    for r in range(20):
        rec = stopping_time(sampler, proj2.point(1.0), t, r, gamma_hint=gamma_ref)
        idx = walk.trajectory_indices(sampler, rec.n_t, r, namespace=4)
        atoms = sampler.atoms()
        v = proj2.point(1.0).v.copy()
        sig = 0.0
        for i, a in enumerate(idx):
            w = atoms[a] @ v
            s = np.linalg.norm(w)
            v, sig = w / s, sig + math.log(s)
            if i < rec.n_t - 1:
                assert sig <= t
        assert sig > t
        assert sig - t == pytest.approx(rec.overshoot, abs=1e-9)


def test_stopping_cap_exceeded():
    s = TrajectorySampler(model.dirac(proj2.rotation(0.5)), seed=3)
    with pytest.raises(walk.CapExceededError):
        stopping_time(s, E1, 1.0, 0, gamma_hint=1e-6)


def test_deviation_profile_deterministic_diag():
    prof = walk.deviation_profile(diag_sampler(), 0.1, [4, 6, 8], 64,
                                  gamma_hint=math.log(2))
    for row in prof.rows:
        assert row.fraction == 0.0


def test_deviation_profile_single_step_tally(sampler, gamma_ref):
    # at n = 1 the norm/cocycle rows must equal the exhaustive atom tally
    prof = walk.deviation_profile(sampler, 0.3, [1], 4000, gamma_hint=gamma_ref)
    atoms, weights = sampler.measure.matrices, sampler.measure.weights
    exact_norm = sum(w for g, w in zip(atoms, weights)
                     if abs(math.log(g.norm) - gamma_ref) >= 0.3)
    x = proj2.point(1.0)
    exact_coc = sum(w for g, w in zip(atoms, weights)
                    if abs(proj2.cocycle(g, x) - gamma_ref) >= 0.3)
    got = {r.event: r.fraction for r in prof.rows}
    assert got["norm"] == pytest.approx(exact_norm, abs=0.05)
    assert got["cocycle"] == pytest.approx(exact_coc, abs=0.05)


def test_deviation_fractions_decay(sampler, gamma_ref):
    prof = walk.deviation_profile(sampler, gamma_ref / 2, [8, 64], 3000,
                                  gamma_hint=gamma_ref)
    by = {(r.event, r.n): r.fraction for r in prof.rows}
    for ev in walk.DEVIATION_EVENTS:
        assert by[(ev, 64)] <= by[(ev, 8)] + 0.02


def test_coupling_deterministic_diag():
    rep = walk.coupling_check(diag_sampler(), 20, 10, E1, 64,
                              gamma_hint=math.log(2))
    assert rep.max_discrepancy == 0.0
    assert rep.violation_fraction == 0.0


def test_coupling_discrepancy_decays_in_l(sampler, gamma_ref):
    reps = [walk.coupling_check(sampler, 2 * l, l, E1, 2000, gamma_hint=gamma_ref)
            for l in (5, 10, 20)]
    assert reps[0].max_discrepancy > reps[1].max_discrepancy > reps[2].max_discrepancy
    for rep in reps[1:]:
        assert rep.violation_fraction <= 0.05


def test_coupling_precondition():
    with pytest.raises(ValueError):
        walk.coupling_check(diag_sampler(), 10, 10, E1, 16)


def test_empirical_measure_start_unpushed(sampler):
    samp = empirical_measure(sampler, 0, 1, start=proj2.point(0.9))
    assert ProjPoint(samp.vectors[0]) == proj2.point(0.9)


def test_empirical_measure_two_seed_agreement(test_mu):
    a = empirical_measure(TrajectorySampler(test_mu, seed=7), 200, 100_000)
    b = empirical_measure(TrajectorySampler(test_mu, seed=1007), 200, 100_000)
    assert ks_distance(a.angles(), b.angles()) <= 0.02


def test_empirical_measure_one_push_invariance(sampler, nu_sample):
    rng = np.random.default_rng(0)
    atoms = sampler.atoms()
    idx = rng.integers(0, len(atoms), size=len(nu_sample))
    pushed = np.einsum("nij,nj->ni", atoms[idx], nu_sample.vectors)
    from furstenberg._kernels import theta_from_vecs
    d = ks_distance(nu_sample.angles(), theta_from_vecs(pushed))
    # 3 sigma of the two-sample KS noise scale at this N, chains correlated
    assert d <= 0.02


def test_empirical_measure_reproducible(sampler):
    a = empirical_measure(sampler, 50, 5000)
    b = empirical_measure(walk.TrajectorySampler(sampler.measure, seed=7), 50, 5000)
    assert np.array_equal(a.vectors, b.vectors)
