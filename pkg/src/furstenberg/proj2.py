"""Exact geometry of SL(2) acting on the projective line.

Matrices are unimodular 2x2 arrays (real, with a complex variant), points are
unit homogeneous 2-vectors with a deterministic sign/phase convention.  The
polar (KAK) factorization is computed in closed form from the 2x2 normal
matrix, so norms, attracting and repelling directions come out to near machine
precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import opnorm2

DET_TOL = 1e-9
PROJ_EQ_TOL = 1e-10
UNIT_TOL = 1e-12
# below this excess over norm 1 the polar axes are meaningless and the
# e1 convention applies
DEGENERATE_TOL = 1e-10


class Mat2:
    """Unimodular 2x2 matrix.  Immutable; checks |det - 1| <= 1e-9 on build."""

    __slots__ = ("m",)

    def __init__(self, entries):
        m = np.array(entries, dtype=complex if np.iscomplexobj(entries) else float)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        if np.iscomplexobj(m) and np.max(np.abs(m.imag)) == 0.0:
            m = m.real.copy()
        d = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(d - 1.0) > DET_TOL:
            raise ValueError(f"matrix is not unimodular: det = {d!r}")
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("Mat2 is immutable")

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.m)

    @property
    def det(self):
        m = self.m
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    @property
    def norm(self) -> float:
        """Operator norm; >= 1 for unimodular matrices."""
        return float(opnorm2(self.m))

    def inv(self) -> "Mat2":
        m = self.m
        # adjugate equals the inverse at det = 1 and is exact in floats
        return Mat2(np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]))

    def __matmul__(self, other: "Mat2") -> "Mat2":
        return Mat2(self.m @ other.m)

    def __repr__(self) -> str:
        return f"Mat2({self.m.tolist()!r})"

    def to_tuple(self) -> tuple:
        """Row-major 4-tuple, the serialization format."""
        m = self.m
        return (m[0, 0], m[0, 1], m[1, 0], m[1, 1])


def identity() -> Mat2:
    return Mat2(np.eye(2))


def rotation(angle: float) -> Mat2:
    c, s = math.cos(angle), math.sin(angle)
    return Mat2([[c, -s], [s, c]])


def diagonal(lam: float) -> Mat2:
    return Mat2([[lam, 0.0], [0.0, 1.0 / lam]])


class ProjPoint:
    """Point of the projective line as a unit homogeneous 2-vector.

    The representative is canonical: the first coordinate of magnitude above
    1e-12 is made real and positive, so equal points serialize identically.
    Equality is projective, at tolerance 1e-10 in the metric.
    """

    __slots__ = ("v",)

    def __init__(self, vec):
        v = np.array(vec, dtype=complex if np.iscomplexobj(vec) else float)
        if v.shape != (2,):
            raise ValueError(f"expected a 2-vector, got shape {v.shape}")
        n = float(np.sqrt(np.sum((v * np.conj(v)).real)))
        if n == 0.0 or not np.isfinite(n):
            raise ValueError("cannot projectivize a zero or non-finite vector")
        v = v / n
        j = 0 if abs(v[0]) > 1e-12 else 1
        if np.iscomplexobj(v):
            phase = v[j] / abs(v[j])
            v = v * np.conj(phase)
            if np.max(np.abs(v.imag)) <= 1e-14:
                v = v.real.copy()
        elif v[j] < 0.0:
            v = -v
        v = v + 0.0  # flush -0.0 so equal points serialize identically
        v.flags.writeable = False
        object.__setattr__(self, "v", v)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("ProjPoint is immutable")

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProjPoint):
            return NotImplemented
        return dist(self, other) <= PROJ_EQ_TOL

    def __hash__(self):  # pragma: no cover
        raise TypeError("ProjPoint equality is tolerance-based; not hashable")

    def __repr__(self) -> str:
        return f"ProjPoint({self.v.tolist()!r})"


E1 = ProjPoint([1.0, 0.0])
E2 = ProjPoint([0.0, 1.0])


def point(phi: float) -> ProjPoint:
    """The real point [cos(phi) : sin(phi)]."""
    return ProjPoint([math.cos(phi), math.sin(phi)])


def act(g: Mat2, x: ProjPoint) -> ProjPoint:
    return ProjPoint(g.m @ x.v)


def dist(x: ProjPoint, y: ProjPoint) -> float:
    """|det(v, w)| for unit representatives; values in [0, 1]."""
    v, w = x.v, y.v
    return float(abs(v[0] * w[1] - v[1] * w[0]))


def cocycle(g: Mat2, x: ProjPoint) -> float:
    """log |g v| / |v|, the additive norm cocycle."""
    w = g.m @ x.v
    return float(np.log(np.sqrt(np.sum((w * np.conj(w)).real))))


@dataclass(frozen=True)
class CartanTriple:
    """g = k . diag(a_lambda, 1/a_lambda) . ell with rotation/unitary factors.

    zM = k e1 is the attracting image direction, zm = ell^{-1} e2 the
    repelling source; both collapse to e1 by convention when a_lambda = 1.
    """

    k: Mat2
    a_lambda: float
    ell: Mat2
    zM: ProjPoint
    zm: ProjPoint

    def reconstruct(self) -> np.ndarray:
        a = np.array([[self.a_lambda, 0.0], [0.0, 1.0 / self.a_lambda]])
        return self.k.m @ a @ self.ell.m


def _cartan_real(g: Mat2, lam: float) -> CartanTriple:
    m = g.m
    H00 = m[0, 0] ** 2 + m[1, 0] ** 2
    H11 = m[0, 1] ** 2 + m[1, 1] ** 2
    H01 = m[0, 0] * m[0, 1] + m[1, 0] * m[1, 1]
    half = 0.5 * math.atan2(2.0 * H01, H00 - H11)
    c, s = math.cos(half), math.sin(half)
    # candidate right-singular direction and its 90-degree complement
    qa = H00 * c * c + 2 * H01 * c * s + H11 * s * s
    qb = H00 * s * s - 2 * H01 * c * s + H11 * c * c
    if qb > qa:
        c, s = -s, c
    v1 = np.array([c, s])
    v2 = np.array([-s, c])  # det [v1 v2] = 1
    u1 = m @ v1
    u1 = u1 / np.sqrt(u1 @ u1)
    k = np.column_stack([u1, [-u1[1], u1[0]]])  # SO(2), det = 1
    ell = np.vstack([v1, v2])  # V^T, det = 1
    return CartanTriple(
        k=Mat2(k), a_lambda=lam, ell=Mat2(ell),
        zM=ProjPoint(u1), zm=ProjPoint(v2),
    )


def _cartan_complex(g: Mat2, lam: float) -> CartanTriple:
    m = g.m
    H = m.conj().T @ m
    a, cdiag, b = H[0, 0].real, H[1, 1].real, H[0, 1]
    disc = math.sqrt(((a - cdiag) / 2.0) ** 2 + abs(b) ** 2)
    top = (a + cdiag) / 2.0 + disc
    # eigenvector for the top eigenvalue: pick the better-conditioned form
    cand1 = np.array([b, top - a], dtype=complex)
    cand2 = np.array([top - cdiag, np.conj(b)], dtype=complex)
    v1 = cand1 if np.linalg.norm(cand1) >= np.linalg.norm(cand2) else cand2
    v1 = v1 / np.linalg.norm(v1)
    v2 = np.array([-np.conj(v1[1]), np.conj(v1[0])])  # det [v1 v2] = 1
    u1 = m @ v1
    u1 = u1 / np.linalg.norm(u1)
    u2 = np.array([-np.conj(u1[1]), np.conj(u1[0])])
    k = np.column_stack([u1, u2])  # SU(2)
    ell = np.vstack([v1, v2]).conj()  # V*, SU(2)
    return CartanTriple(
        k=Mat2(k), a_lambda=lam, ell=Mat2(ell),
        zM=ProjPoint(u1), zm=ProjPoint(v2),
    )


def cartan(g: Mat2) -> CartanTriple:
    """Closed-form polar factorization of a unimodular 2x2 matrix.

    Near the degenerate case (norm within 1e-10 of 1) the axes are not
    determined; the factorization returns k = g a^{-1}, ell = id and both
    density points equal to e1.
    """
    lam = g.norm
    if lam <= 1.0 + DEGENERATE_TOL:
        a_inv = np.array([[1.0 / lam, 0.0], [0.0, lam]])
        return CartanTriple(
            k=Mat2(g.m @ a_inv), a_lambda=lam, ell=identity(),
            zM=E1, zm=E1,
        )
    if g.is_real:
        return _cartan_real(g, lam)
    return _cartan_complex(g, lam)
