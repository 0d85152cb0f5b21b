import json
import math

import numpy as np
import pytest

from furstenberg import model, proj2
from furstenberg.model import (VERDICT_ELEMENTARY, VERDICT_LIKELY, dirac,
                               load_measure, moments, nonelementary_probe,
                               reverse, uniform)


def test_load_single_atom(tmp_path):
    doc = {"atoms": [{"m": [2.0, 0.0, 0.0, 0.5], "w": 1.0}]}
    mu = load_measure(doc)
    assert len(mu.atoms) == 1 and mu.real_flag
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    mu2 = load_measure(p)
    assert np.array_equal(mu2.atoms[0][0].m, mu.atoms[0][0].m)


def test_load_two_atoms_weights():
    doc = {"atoms": [{"m": [2, 0, 0, 0.5], "w": 0.5},
                     {"m": [1, 1, 0, 1], "w": 0.5}]}
    mu = load_measure(doc)
    assert mu.weights.tolist() == [0.5, 0.5]


def test_load_renormalizes_close_weights():
    doc = {"atoms": [{"m": [2, 0, 0, 0.5], "w": 0.5000001},
                     {"m": [1, 1, 0, 1], "w": 0.5}]}
    mu = load_measure(doc)
    assert sum(w for _, w in mu.atoms) == pytest.approx(1.0, abs=1e-15)


def test_load_rejects_bad_weight_sum():
    doc = {"atoms": [{"m": [2, 0, 0, 0.5], "w": 0.4},
                     {"m": [1, 1, 0, 1], "w": 0.5}]}
    with pytest.raises(ValueError, match="sum"):
        load_measure(doc)


def test_load_rejects_non_unimodular():
    with pytest.raises(ValueError, match="det"):
        load_measure({"atoms": [{"m": [1, 0, 0, 2], "w": 1.0}]})


def test_load_rejects_nonpositive_weight():
    with pytest.raises(ValueError, match="positive"):
        load_measure({"atoms": [{"m": [2, 0, 0, 0.5], "w": 0.0},
                                {"m": [1, 0, 0, 1], "w": 1.0}]})


def test_load_rejects_malformed():
    with pytest.raises(ValueError, match="malformed"):
        load_measure('{"atoms": [')
    with pytest.raises(ValueError):
        load_measure({"atoms": [{"m": [1, 0, 0], "w": 1.0}]})


def test_serialization_round_trip_dyadic():
    mu = uniform([np.array([[2.0, 0.25], [0.0, 0.5]]),
                  np.array([[1.0, 0.5], [0.0, 1.0]])])
    doc = mu.to_doc()
    again = load_measure(json.loads(json.dumps(doc)))
    for (g, w), (h, v) in zip(mu.atoms, again.atoms):
        assert np.array_equal(g.m, h.m) and w == v


def test_moments_examples():
    assert moments(dirac(proj2.identity()), 3.0) == 0.0
    assert moments(dirac(proj2.diagonal(2.0)), 2.0) == pytest.approx(
        math.log(2) ** 2, abs=1e-14)
    mu = uniform([proj2.diagonal(2.0), proj2.diagonal(3.0)])
    assert moments(mu, 1.0) == pytest.approx(
        (math.log(2) + math.log(3)) / 2, abs=1e-14)
    assert moments(mu, 2.0) >= moments(mu, 1.0) ** 2  # Cauchy-Schwarz


def test_moments_refinement_invariance():
    g = proj2.diagonal(2.0)
    h = proj2.rotation(0.3) @ proj2.diagonal(3.0)
    base = model.measure([(g, 0.5), (h, 0.5)])
    split = model.measure([(g, 0.25), (g, 0.25), (h, 0.5)])
    for p in (0.5, 1.0, 2.0, 3.5):
        assert moments(split, p) == pytest.approx(moments(base, p), abs=1e-14)


def test_reverse_involution_and_moments(test_mu):
    rev = reverse(test_mu)
    back = reverse(rev)
    for (g, w), (h, v) in zip(test_mu.atoms, back.atoms):
        assert np.max(np.abs(g.m - h.m)) <= 1e-14 and w == v
    for p in (1.0, 2.0):
        assert moments(rev, p) == pytest.approx(moments(test_mu, p), abs=1e-12)


def test_probe_rotation_is_elementary():
    rep = nonelementary_probe(dirac(proj2.rotation(1.0)))
    assert rep.verdict == VERDICT_ELEMENTARY
    assert rep.max_word_norm <= 1.0 + 1e-6


def test_probe_diagonal_is_elementary():
    rep = nonelementary_probe(dirac(proj2.diagonal(2.0)))
    assert rep.verdict == VERDICT_ELEMENTARY
    assert rep.invariant_set is not None


def test_probe_triangular_pair_shares_fixed_point():
    # two upper-triangular atoms preserve [1:0]; the brute-force search must
    # find that invariant singleton no matter how the pair is advertised
    mu = uniform([np.array([[2.0, 0.0], [0.0, 0.5]]),
                  np.array([[1.0, 1.0], [0.0, 1.0]]) @ np.array([[2.0, 0.0], [0.0, 0.5]])])
    rep = nonelementary_probe(mu, depth=6)
    assert rep.verdict == VERDICT_ELEMENTARY
    assert len(rep.invariant_set) == 1
    assert proj2.dist(rep.invariant_set[0], proj2.E1) <= 1e-8


def test_probe_benchmark_measure(test_mu):
    rep = nonelementary_probe(test_mu, depth=6)
    assert rep.verdict == VERDICT_LIKELY


def test_probe_depth_validation(test_mu):
    with pytest.raises(ValueError):
        nonelementary_probe(test_mu, depth=9)


def test_validation_idempotent(test_mu):
    again = load_measure(test_mu.to_doc())
    assert load_measure(again.to_doc()).to_doc() == again.to_doc()
