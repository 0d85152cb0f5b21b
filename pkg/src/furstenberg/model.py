"""Finitely supported generator measures on SL(2): ingestion, validation,
log-norm moments, reversal, and a heuristic non-elementarity probe.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import proj2
from .proj2 import Mat2, ProjPoint

WEIGHT_SUM_TOL = 1e-6
NORM_GROWTH_TOL = 1e-6
INVARIANCE_TOL = 1e-8

VERDICT_LIKELY = "likely-non-elementary"
VERDICT_INCONCLUSIVE = "inconclusive"
VERDICT_ELEMENTARY = "elementary-evidence"


@dataclass(frozen=True)
class GeneratorMeasure:
    """Finitely supported probability measure on SL(2).

    Atoms are (matrix, weight) pairs with positive weights summing to one;
    every atom is unimodular by construction of Mat2.
    """

    atoms: tuple[tuple[Mat2, float], ...]
    real_flag: bool = field(init=False)

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("a generator measure needs at least one atom")
        total = 0.0
        for g, w in self.atoms:
            if not (w > 0.0):
                raise ValueError(f"weight must be positive, got {w!r}")
            total += w
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {total!r}")
        object.__setattr__(self, "real_flag", all(g.is_real for g, _ in self.atoms))

    @property
    def matrices(self) -> list[Mat2]:
        return [g for g, _ in self.atoms]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    def matrix_array(self) -> np.ndarray:
        """(n_atoms, 2, 2) stacked entries for the vectorized engines."""
        return np.stack([g.m for g, _ in self.atoms])

    def to_doc(self) -> dict:
        return {
            "atoms": [
                {"m": [float(v) for v in g.to_tuple()], "w": float(w)}
                for g, w in self.atoms
            ]
        }


def measure(pairs) -> GeneratorMeasure:
    """Build a measure from (matrix-like, weight) pairs; weights renormalized."""
    total = sum(w for _, w in pairs)
    if not pairs or not (total > 0.0):
        raise ValueError("need atoms with positive total weight")
    atoms = tuple(
        (m if isinstance(m, Mat2) else Mat2(m), float(w) / total) for m, w in pairs
    )
    return GeneratorMeasure(atoms)


def dirac(g) -> GeneratorMeasure:
    return measure([(g, 1.0)])


def uniform(mats) -> GeneratorMeasure:
    mats = list(mats)
    return measure([(m, 1.0 / len(mats)) for m in mats])


def test_measure() -> GeneratorMeasure:
    """The fixed two-atom benchmark measure used across the tool.

    Two hyperbolic matrices of norm e (axes rotated by 1.3 radians): their
    fixed-point pairs are disjoint, so no finite set is preserved and the
    generated semigroup is unbounded.  Growth rate is near 0.551 nats/step.
    """
    kappa, ang = 1.0, 1.3
    d = np.array([[math.exp(kappa), 0.0], [0.0, math.exp(-kappa)]])
    r = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
    return uniform([d, r @ d @ r.T])


def load_measure(source) -> GeneratorMeasure:
    """Parse a measure document: {"atoms": [{"m": [a,b,c,d], "w": 0.5}, ...]}.

    Accepts a path, a JSON string, or an already-decoded dict.  Weights are
    renormalized when they sum to 1 within 1e-6, otherwise this is an error.
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = None
        if isinstance(source, (str, Path)):
            p = Path(source)
            try:
                is_file = p.is_file()
            except OSError:
                is_file = False
            text = p.read_text() if is_file else str(source)
        if text is None:
            raise ValueError(f"cannot read a measure from {type(source)!r}")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValueError(f"malformed measure document: {e}") from e

    if not isinstance(doc, dict) or "atoms" not in doc:
        raise ValueError('measure document must contain an "atoms" list')
    raw = doc["atoms"]
    if not isinstance(raw, list) or not raw:
        raise ValueError("atoms must be a non-empty list")

    pairs = []
    total = 0.0
    for i, entry in enumerate(raw):
        try:
            a, b, c, d = (float(v) for v in entry["m"])
            w = float(entry["w"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"malformed atom #{i}: {e}") from e
        if not (w > 0.0):
            raise ValueError(f"atom #{i}: weight must be positive, got {w!r}")
        det = a * d - b * c
        if abs(det - 1.0) > proj2.DET_TOL:
            raise ValueError(f"atom #{i}: det = {det!r}, not unimodular")
        pairs.append((Mat2([[a, b], [c, d]]), w))
        total += w
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"weights sum to {total!r}, outside 1 +/- {WEIGHT_SUM_TOL}")
    atoms = tuple((g, w / total) for g, w in pairs)
    return GeneratorMeasure(atoms)


def moments(mu: GeneratorMeasure, p: float) -> float:
    """Weighted p-th moment of log|g|: sum_i w_i log^p |g_i|."""
    if not (p > 0):
        raise ValueError("moment order must be positive")
    return float(sum(w * math.log(g.norm) ** p for g, w in mu.atoms))


def moment_report(mu: GeneratorMeasure) -> "MomentReport":
    return MomentReport(m1=moments(mu, 1.0), m2=moments(mu, 2.0), _mu=mu)


@dataclass(frozen=True)
class MomentReport:
    m1: float
    m2: float
    _mu: GeneratorMeasure

    def mp(self, p: float) -> float:
        return moments(self._mu, p)


def reverse(mu: GeneratorMeasure) -> GeneratorMeasure:
    """Image of the measure under matrix inversion; weights preserved."""
    return GeneratorMeasure(tuple((g.inv(), w) for g, w in mu.atoms))


# ----------------------------------------------------------------------------
# Non-elementarity probe.  Semi-decidable in general; this is word enumeration
# plus a brute-force search for invariant sets of size <= 2 among eigenvector
# candidates, never a proof.


@dataclass(frozen=True)
class ProbeReport:
    verdict: str
    max_word_norm: float
    words_checked: int
    invariant_set: tuple | None
    proximal_pairs: int
    notes: str = ""


def _eigen_directions(g: Mat2) -> list[ProjPoint]:
    vals, vecs = np.linalg.eig(g.m)
    out = []
    for j in range(2):
        v = vecs[:, j]
        if np.isfinite(v).all() and np.linalg.norm(v) > 0:
            out.append(ProjPoint(v))
    return out


def _is_invariant(candidate: list[ProjPoint], mats: list[Mat2]) -> bool:
    for g in mats:
        for x in candidate:
            gx = proj2.act(g, x)
            if not any(proj2.dist(gx, y) <= INVARIANCE_TOL for y in candidate):
                return False
    return True


def nonelementary_probe(mu: GeneratorMeasure, depth: int = 6) -> ProbeReport:
    """Heuristic evidence for / against non-elementarity.

    Checks (i) norm growth along words up to the given length and (ii) whether
    any 1- or 2-point set assembled from eigen-directions of short words is
    preserved by every atom.  Verdicts are evidence, not certificates.
    """
    if not (1 <= depth <= 8):
        raise ValueError("depth must be between 1 and 8")
    mats = mu.matrices
    n_atoms = len(mats)

    max_norm = max(g.norm for g in mats)
    words = list(mats)
    words_checked = n_atoms
    frontier = list(mats)
    for _ in range(depth - 1):
        if words_checked > 4096:
            break
        frontier = [g @ h for g in frontier for h in mats]
        words.extend(frontier)
        words_checked += len(frontier)
        max_norm = max(max_norm, max(g.norm for g in frontier))

    growth = max_norm > 1.0 + NORM_GROWTH_TOL

    # candidate fixed points come from eigen-directions of short words
    cand_words = [w for w in words if w.norm > 1.0 + NORM_GROWTH_TOL]
    candidates: list[ProjPoint] = []
    for w in ([*mats, *cand_words][: 3 * n_atoms + 8]):
        for x in _eigen_directions(w):
            if not any(proj2.dist(x, y) <= INVARIANCE_TOL for y in candidates):
                candidates.append(x)

    invariant = None
    for x in candidates:
        if _is_invariant([x], mats):
            invariant = (x,)
            break
    if invariant is None:
        for x, y in itertools.combinations(candidates, 2):
            if _is_invariant([x, y], mats):
                invariant = (x, y)
                break

    proximal = [w for w in words if w.norm > 1.0 + 1e-3 and abs(np.trace(w.m)) > 2.0 + 1e-9]
    disjoint_pairs = 0
    for g, h in itertools.combinations(proximal[:24], 2):
        pg = _eigen_directions(g)
        ph = _eigen_directions(h)
        if len(pg) == 2 and len(ph) == 2 and all(
            proj2.dist(a, b) > 1e-6 for a in pg for b in ph
        ):
            disjoint_pairs += 1

    if not growth:
        return ProbeReport(VERDICT_ELEMENTARY, max_norm, words_checked, None, 0,
                           notes="all word norms stay at 1; compact evidence")
    if invariant is not None:
        return ProbeReport(VERDICT_ELEMENTARY, max_norm, words_checked, invariant,
                           disjoint_pairs,
                           notes=f"found an invariant {len(invariant)}-point set")
    if disjoint_pairs >= 1:
        return ProbeReport(VERDICT_LIKELY, max_norm, words_checked, None,
                           disjoint_pairs,
                           notes="norm growth and proximal words with disjoint axes")
    return ProbeReport(VERDICT_INCONCLUSIVE, max_norm, words_checked, None, 0,
                       notes="norm growth but no transversality witness found")
