"""Mobius arithmetic in the Poincare disk and the genus-2 octagon group.

The disk carries the curvature -1 metric 4|dz|^2/(1-|z|^2)^2, so the
regular octagon with interior angles pi/4 glues to a closed genus-2
surface of area exactly 4*pi.  Isometries are represented by complex
2x2 matrices [[a, b], [c, d]] acting as z -> (a z + b)/(c z + d),
normalized to |det| = 1 and considered up to global sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ResourceError

#: interior angle of the fundamental octagon
OCTAGON_ANGLE = math.pi / 4
#: Euclidean radius of the octagon corners, tanh of half the hyperbolic
#: circumradius arccosh(3 + 2*sqrt(2))
CORNER_RADIUS = 2.0 ** -0.25
#: hyperbolic apothem (center to side midpoint)
APOTHEM = math.acosh(1.0 + math.sqrt(2.0))

_SIGN_EPS = 1e-7


@dataclass(frozen=True)
class MobiusTransform:
    """Unit-determinant disk isometry, up to global matrix sign.

    ``word`` records how the element was built from the side-pairing
    generators (indices 0..7, with k+4 the inverse of k); it is pure
    bookkeeping and does not enter equality.
    """

    a: complex
    b: complex
    c: complex
    d: complex
    word: tuple = field(default_factory=tuple)

    @staticmethod
    def from_matrix(m, word=()):
        """Normalize a 2x2 complex matrix to |det| = 1 and wrap it."""
        a, b, c, d = complex(m[0][0]), complex(m[0][1]), complex(m[1][0]), complex(m[1][1])
        det = a * d - b * c
        if det == 0:
            raise DomainError("singular matrix is not a Mobius transform")
        s = np.sqrt(det)
        return MobiusTransform(a / s, b / s, c / s, d / s, tuple(word))

    @staticmethod
    def identity():
        return MobiusTransform(1.0 + 0j, 0j, 0j, 1.0 + 0j, ())

    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=complex)

    def __matmul__(self, other):
        """Composition: (S @ T)(z) = S(T(z))."""
        return MobiusTransform(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
            self.word + other.word,
        )

    def inverse(self):
        inv_word = tuple(inverse_letter(k) for k in reversed(self.word))
        return MobiusTransform(self.d, -self.b, -self.c, self.a, inv_word)

    def apply(self, z):
        """Image of z (scalar or ndarray) in the open unit disk."""
        z = np.asarray(z)
        if np.any(np.abs(z) >= 1.0):
            raise DomainError("point outside the open unit disk")
        w = (self.a * z + self.b) / (self.c * z + self.d)
        return w if w.ndim else complex(w)

    def derivative(self, z):
        """Complex derivative 1/(cz+d)^2 (|det| = 1 normalization)."""
        z = np.asarray(z)
        if np.any(np.abs(z) >= 1.0):
            raise DomainError("point outside the open unit disk")
        den = self.c * z + self.d
        if np.any(np.abs(den) < 1e-14):
            raise DomainError("derivative pole inside the disk (matrix is not disk-preserving)")
        w = 1.0 / (den * den)
        return w if w.ndim else complex(w)

    def entries(self):
        return np.array([self.a, self.b, self.c, self.d], dtype=complex)

    def equals(self, other, tol=1e-9):
        """Equality up to global sign, entrywise, scaled by matrix size."""
        x = self.entries()
        y = other.entries()
        scale = max(1.0, float(np.max(np.abs(x))), float(np.max(np.abs(y))))
        return (
            float(np.max(np.abs(x - y))) <= tol * scale
            or float(np.max(np.abs(x + y))) <= tol * scale
        )

    def is_identity(self, tol=1e-9):
        return self.equals(MobiusTransform.identity(), tol)


def inverse_letter(k):
    """Index of the inverse generator under the 0..7 labeling."""
    return (k + 4) % 8


@dataclass(frozen=True)
class FuchsianGroup:
    """Side-pairing group of the fundamental octagon.

    generators[k] for k in 0..3 are the four hyperbolic translations
    pairing side k+4 onto side k; generators[k+4] are their inverses.
    ``relation_word`` is the vertex-cycle relator (indices into
    ``generators``) and evaluates to the identity.
    """

    generators: tuple
    relation_word: tuple

    def evaluate_word(self, word):
        m = MobiusTransform.identity()
        for k in word:
            m = m @ self.generators[k]
        return MobiusTransform(m.a, m.b, m.c, m.d, tuple(word))

    def relator(self):
        return self.evaluate_word(self.relation_word)


def octagon_group():
    """Regular-octagon Fuchsian group for the genus-2 surface.

    Corners sit at Euclidean radius 2^(-1/4) and angles (2j+1)pi/8; the
    side with midpoint direction k*pi/4 is paired with the opposite side
    by the translation T_k of length 2*arccosh(1+sqrt(2)) along that
    diameter.  The vertex cycle visits all 8 corners (total angle 2*pi),
    which yields the stored length-8 relator.
    """
    alpha = 1.0 + math.sqrt(2.0)  # cosh of half the translation length
    beta = math.sqrt(alpha * alpha - 1.0)
    t0 = MobiusTransform(alpha + 0j, beta + 0j, beta + 0j, alpha + 0j, (0,))
    gens = []
    for k in range(4):
        phase = np.exp(1j * k * math.pi / 4.0)
        gens.append(MobiusTransform(alpha + 0j, beta * phase, beta / phase, alpha + 0j, (k,)))
    for k in range(4):
        g = gens[k].inverse()
        gens.append(MobiusTransform(g.a, g.b, g.c, g.d, (k + 4,)))
    # Relator from the corner cycle: applying T4,T7,T2,T5,T0,T3,T6,T1 in
    # that order walks the corner V0 around the identified vertex once.
    relation = (1, 6, 3, 0, 5, 2, 7, 4)
    group = FuchsianGroup(tuple(gens), relation)
    rel = group.relator()
    if not rel.is_identity(1e-12):
        raise AssertionError("octagon relator failed to close")
    return group


def octagon_corners():
    """The 8 corner positions, counterclockwise from angle pi/8."""
    j = np.arange(8)
    return CORNER_RADIUS * np.exp(1j * (2 * j + 1) * math.pi / 8.0)


def apply_mobius(transform, z):
    """Functional form of ``MobiusTransform.apply``."""
    return transform.apply(z)


def mobius_derivative(transform, z):
    """Functional form of ``MobiusTransform.derivative``."""
    return transform.derivative(z)


def hyperbolic_distance(z1, z2):
    """Distance in the curvature -1 disk metric 4|dz|^2/(1-|z|^2)^2.

    d(0, r) = log((1+r)/(1-r)); the general case maps z1 to 0.
    Accepts scalars or broadcastable arrays.
    """
    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    if np.any(np.abs(z1) >= 1.0) or np.any(np.abs(z2) >= 1.0):
        raise DomainError("points must lie in the open unit disk")
    t = np.abs((z1 - z2) / (1.0 - np.conj(z1) * z2))
    d = 2.0 * np.arctanh(t)
    return d if d.ndim else float(d)


def hyperbolic_midpoint(z1, z2):
    """Geodesic midpoint; commutes exactly with disk isometries."""
    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    w = (z2 - z1) / (1.0 - np.conj(z1) * z2)
    r = np.abs(w)
    # half the distance to w along the ray from 0
    half = np.tanh(0.5 * np.arctanh(r))
    m0 = np.where(r > 0, w * np.divide(half, r, out=np.zeros_like(r), where=r > 0), 0.0)
    m = (m0 + z1) / (1.0 + np.conj(z1) * m0)
    return m if m.ndim else complex(m)


def _canonical_rows(mats):
    """Flatten (n,2,2) matrices to sign-canonical rows of 8 reals.

    The sign is fixed so the first entry of magnitude > _SIGN_EPS *
    scale has positive real part (or positive imaginary part when its
    real part is negligible).
    """
    n = mats.shape[0]
    flat = mats.reshape(n, 4)
    rows = np.empty((n, 8))
    rows[:, 0::2] = flat.real
    rows[:, 1::2] = flat.imag
    scale = np.max(np.abs(rows), axis=1, keepdims=True)
    signif = np.abs(rows) > _SIGN_EPS * scale
    first = np.argmax(signif, axis=1)
    lead = rows[np.arange(n), first]
    rows[lead < 0] *= -1.0
    return rows


def _unique_rows(rows, tol):
    """Indices of representatives, keeping the first of each duplicate set.

    Rows are clustered on column 0 (gap > tol splits a cluster) and
    compared pairwise within a cluster, so near-ties in the sort key
    cannot hide a duplicate.
    """
    n = rows.shape[0]
    scale = max(1.0, float(np.max(np.abs(rows)))) if n else 1.0
    atol = tol * scale
    order = np.argsort(rows[:, 0], kind="stable")
    sorted_rows = rows[order]
    gaps = np.diff(sorted_rows[:, 0]) > atol
    cluster_starts = np.concatenate([[0], np.nonzero(gaps)[0] + 1, [n]])
    keep = np.ones(n, dtype=bool)
    for s, e in zip(cluster_starts[:-1], cluster_starts[1:]):
        if e - s == 1:
            continue
        idx = order[s:e]
        idx = idx[np.argsort(idx, kind="stable")]
        block = rows[idx]
        alive = np.ones(len(idx), dtype=bool)
        for i in range(len(idx)):
            if not alive[i]:
                continue
            d = np.max(np.abs(block[i + 1 :] - block[i]), axis=1)
            dup = np.nonzero(d <= atol)[0] + i + 1
            alive[dup] = False
        keep[idx[~alive]] = False
    return keep


def enumerate_group(group, max_word_length, cap=2_000_000, tol=1e-9):
    """All distinct elements of word length <= max_word_length.

    Breadth-first over reduced words with numeric deduplication up to
    sign; the result is ordered by word length, then lexicographically
    by word, so repeated runs enumerate identically.
    """
    if max_word_length < 0:
        raise DomainError("max_word_length must be >= 0")
    gens = np.stack([g.matrix() for g in group.generators])
    elements = [MobiusTransform.identity()]
    level_mats = np.eye(2, dtype=complex)[None, :, :]
    level_words = [()]
    seen_rows = _canonical_rows(level_mats)
    for _ in range(max_word_length):
        prev_n = level_mats.shape[0]
        # right-multiply every previous element by every generator
        cand = np.einsum("nij,gjk->ngik", level_mats, gens).reshape(prev_n * 8, 2, 2)
        cand_words = [w + (g,) for w in level_words for g in range(8)]
        reduced = np.array(
            [len(w) < 2 or w[-1] != inverse_letter(w[-2]) for w in cand_words]
        )
        cand = cand[reduced]
        cand_words = [w for w, ok in zip(cand_words, reduced) if ok]
        rows = _canonical_rows(cand)
        combined = np.vstack([seen_rows, rows])
        keep = _unique_rows(combined, tol)[seen_rows.shape[0] :]
        new_mats = cand[keep]
        new_words = [w for w, ok in zip(cand_words, keep) if ok]
        if len(elements) + len(new_words) > cap:
            raise ResourceError(
                f"group enumeration exceeds cap={cap} at word length {len(new_words[0])}"
            )
        for m, w in zip(new_mats, new_words):
            elements.append(MobiusTransform(m[0, 0], m[0, 1], m[1, 0], m[1, 1], w))
        seen_rows = np.vstack([seen_rows, _canonical_rows(new_mats)])
        level_mats = new_mats
        level_words = new_words
        if not new_words:
            break
    return elements
