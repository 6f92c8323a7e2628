"""Triangulated fundamental domains with glued boundaries.

The genus-2 surface is meshed as the regular octagon, fan-triangulated
from the center and refined by edge bisection at *hyperbolic* midpoints,
so boundary subdivision points stay on the geodesic sides and map onto
their partners exactly under the side pairings.  Identified vertices are
merged by union-find into canonical indices; scalar unknowns live on
canonical vertices while positions, the background factor h0 and metric
factors stay per-copy (they are chart quantities).

Straight-chord triangles overcover the geodesic octagon by one thin lens
per boundary chord.  Integration therefore uses exact per-triangle
background masses (the Poincare area of a straight-sided triangle has a
closed form as a boundary line integral) minus quadrature of the lens
masses, which puts the discrete total area within ~1e-6 of 4*pi instead
of the O(h^2) one would get from vertex sampling of h0.

A flat unit-square torus mode exists purely to validate the PDE solver
against closed-form constant solutions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import MeshError
from .fuchsian import FuchsianGroup, hyperbolic_midpoint, octagon_corners

log = logging.getLogger(__name__)

#: fan subdivisions of each geodesic boundary arc when computing lens masses
LENS_QUADRATURE = 16


@dataclass
class ScalarField:
    """Real values on canonical vertices (well-defined functions on the surface)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@dataclass
class MetricField:
    """Conformal factor G of a metric G(z)|dz|^2, sampled per vertex copy.

    The factor is a chart quantity (identified copies differ by the
    |derivative|^2 of the pairing map), so it is stored on full vertices.
    ``coneVertices`` lists full vertex indices where the factor vanishes.
    """

    factor: np.ndarray
    coneVertices: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    def __post_init__(self):
        self.factor = np.asarray(self.factor, dtype=float)
        if np.any(self.factor < 0):
            raise MeshError("metric factor must be nonnegative")


@dataclass
class SurfaceMesh:
    """Triangulated fundamental domain with boundary identification.

    positions/triangles index *full* vertices (all copies); ``identify``
    maps full index -> canonical index; ``vertexWeights`` are lumped
    volumes of the background metric h0|dz|^2 per full vertex, already
    corrected for the boundary lenses.  ``boundaryPairs`` lists
    (src, dst, k) with dst the vertex at position T_k(src).
    """

    positions: np.ndarray
    triangles: np.ndarray
    identify: np.ndarray
    canonicalCount: int
    h0: np.ndarray
    vertexWeights: np.ndarray
    boundaryPairs: list
    edgeCount: int
    eulerCharacteristic: int
    torus: bool
    refinement: int

    @property
    def fullCount(self):
        return len(self.positions)

    def scalar(self, values):
        """Canonical ScalarField from a scalar or array (canonical or full)."""
        v = np.asarray(values, dtype=float)
        if v.ndim == 0:
            return ScalarField(np.full(self.canonicalCount, float(v)))
        if len(v) == self.canonicalCount:
            return ScalarField(v.copy())
        if len(v) == self.fullCount:
            return ScalarField(self.reduce(v))
        raise MeshError("field length matches neither canonical nor full count")

    def expand(self, canonical_values):
        """Canonical -> full by copying values to every identified copy."""
        return np.asarray(canonical_values)[self.identify]

    def reduce(self, full_values):
        """Full -> canonical by taking the representative copy's value."""
        out = np.empty(self.canonicalCount, dtype=np.asarray(full_values).dtype)
        out[self.identify] = full_values
        return out

    def background_metric(self):
        return MetricField(self.h0.copy())

    def edges(self):
        """Unique undirected full-vertex edges, lexicographically sorted."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)


def _disk_triangle_masses(positions, triangles):
    """Exact integral of 4/(1-|z|^2)^2 over each straight-sided triangle.

    Green's theorem with the potential 2(x dy - y dx)/(1-|z|^2) reduces
    the mass to per-edge line integrals of 1/(quadratic in t), done in
    closed form; valid for any triangle inside the unit disk.
    """
    total = np.zeros(len(triangles))
    for i in range(3):
        p = positions[triangles[:, i]]
        q = positions[triangles[:, (i + 1) % 3]]
        total += _disk_edge_term(p, q)
    return total


def _disk_edge_term(p, q):
    s = np.imag(np.conj(p) * q)  # twice the signed area of (0, p, q)
    a2 = -np.abs(q - p) ** 2
    a1 = -2.0 * np.real(np.conj(p) * (q - p))
    a0 = 1.0 - np.abs(p) ** 2
    disc = a1 * a1 - 4.0 * a0 * a2
    sq = np.sqrt(disc)
    x = (-2.0 * a2 - a1) / sq
    y = -a1 / sq
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (x - y) / (1.0 - x * y)
        integral = np.where(a2 < 0, 2.0 * np.arctanh(u) / np.where(sq > 0, sq, 1.0), 0.0)
    # degenerate zero-length edges contribute nothing
    return np.where(np.abs(s) > 0, 2.0 * s * integral, 0.0)


def _flat_triangle_areas(positions, triangles):
    p0 = positions[triangles[:, 0]]
    p1 = positions[triangles[:, 1]]
    p2 = positions[triangles[:, 2]]
    return 0.5 * np.imag(np.conj(p1 - p0) * (p2 - p0))


def _geodesic_circle(a, b):
    """Center and radius of the circle through a, b orthogonal to |z|=1."""
    m = np.array([[2 * a.real, 2 * a.imag], [2 * b.real, 2 * b.imag]])
    rhs = np.array([1 + abs(a) ** 2, 1 + abs(b) ** 2])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-14:
        raise MeshError("geodesic through these points is a diameter; no lens exists")
    cx = (rhs[0] * m[1, 1] - rhs[1] * m[0, 1]) / det
    cy = (m[0, 0] * rhs[1] - m[1, 0] * rhs[0]) / det
    c = complex(cx, cy)
    return c, math.sqrt(abs(c) ** 2 - 1.0)


def _lens_corrections(positions, boundary_edges, weights):
    """Subtract the background mass of each chord/geodesic-arc lens.

    The lens is fanned from the chord's first endpoint into straight
    triangles with apexes on the arc; each fan triangle's mass is exact
    (same closed form), so only the second-level arc slivers remain.
    The correction is split between the chord endpoints by arc parameter.
    """
    n = LENS_QUADRATURE
    for a_idx, b_idx in boundary_edges:
        a = complex(positions[a_idx])
        b = complex(positions[b_idx])
        c, r = _geodesic_circle(a, b)
        ta = np.angle(a - c)
        tb = np.angle(b - c)
        dt = (tb - ta + math.pi) % (2 * math.pi) - math.pi  # short way
        s = np.arange(n + 1) / n
        arc = c + r * np.exp(1j * (ta + dt * s))
        fan = np.stack(
            [np.full(n - 1, 0, dtype=int), np.arange(1, n), np.arange(2, n + 1)], axis=1
        )
        pts = np.concatenate([[a], arc[1:]])
        masses = np.abs(_disk_triangle_masses(pts, fan))
        mid = (s[1:-1] + s[2:]) / 2.0
        weights[a_idx] -= float(np.sum(masses * (1.0 - mid)))
        weights[b_idx] -= float(np.sum(masses * mid))


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _subdivide(positions, triangles, side_sets, midpoint):
    """One 1->4 split of every triangle; new vertices at edge midpoints."""
    cache = {}
    positions = list(positions)

    def mid(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            positions.append(midpoint(positions[i], positions[j]))
            cache[key] = len(positions) - 1
            side_sets.append(side_sets[i] & side_sets[j])
        return cache[key]

    out = []
    for a, b, c in triangles:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
    return positions, out


def _finalize(positions, triangles, side_sets, pairs, h0, weights, torus, refinement):
    positions = np.asarray(positions, dtype=complex)
    triangles = np.asarray(triangles, dtype=int)
    areas = _flat_triangle_areas(positions, triangles)
    if np.any(areas <= 1e-14):
        raise MeshError(f"{int(np.sum(areas <= 1e-14))} degenerate or flipped triangles")

    uf = _UnionFind(len(positions))
    for src, dst, _ in pairs:
        uf.union(src, dst)
    roots = np.array([uf.find(i) for i in range(len(positions))])
    reps = np.unique(roots)
    canon_of_root = {r: i for i, r in enumerate(reps)}
    identify = np.array([canon_of_root[r] for r in roots])

    # surface edge count: interior edges survive as-is, boundary edges
    # (on one triangle only) glue in pairs under the side pairings
    edge_use = {}
    for a, b, c in triangles:
        for i, j in ((a, b), (b, c), (c, a)):
            key = (min(i, j), max(i, j))
            edge_use[key] = edge_use.get(key, 0) + 1
    n_boundary = sum(1 for n in edge_use.values() if n == 1)
    edge_count = len(edge_use) - n_boundary // 2
    chi = len(reps) - edge_count + len(triangles)

    mesh = SurfaceMesh(
        positions=positions,
        triangles=triangles,
        identify=identify,
        canonicalCount=len(reps),
        h0=h0,
        vertexWeights=weights,
        boundaryPairs=pairs,
        edgeCount=edge_count,
        eulerCharacteristic=chi,
        torus=torus,
        refinement=refinement,
    )
    # boundary vertices must land on their partners under the pairing maps
    for src, dst, _ in pairs:
        if identify[src] != identify[dst]:
            raise MeshError("identification pairs are not merged")
    return mesh


def build_fundamental_mesh(G: FuchsianGroup, refinementLevel: int) -> SurfaceMesh:
    """Octagon mesh: fan triangulation + hyperbolic-midpoint refinement.

    Side S_k (k = 0..7) is the geodesic from corner V_{k-1} to V_k; the
    generator T_k carries S_{k+4} onto S_k, V_{k+3} to V_k and V_{k+4}
    to V_{k-1}.  Midpoint refinement commutes with the isometries, so
    each boundary vertex on S_{k+4} maps exactly onto one on S_k.
    """
    if refinementLevel < 0:
        raise MeshError("refinementLevel must be >= 0")
    corners = octagon_corners()
    positions = [complex(c) for c in corners] + [0j]
    # corner V_j lies on sides S_j and S_{j+1}
    side_sets = [frozenset({j, (j + 1) % 8}) for j in range(8)] + [frozenset()]
    triangles = [(8, j, (j + 1) % 8) for j in range(8)]

    for _ in range(refinementLevel):
        positions, triangles = _subdivide(
            positions, triangles, side_sets, hyperbolic_midpoint
        )

    positions_arr = np.asarray(positions, dtype=complex)
    tri_arr = np.asarray(triangles, dtype=int)

    # boundary sub-edges: triangle edges whose endpoints share a side
    boundary_edges = []
    seen = set()
    for a, b, c in triangles:
        for i, j in ((a, b), (b, c), (c, a)):
            key = (min(i, j), max(i, j))
            if key in seen:
                continue
            seen.add(key)
            if side_sets[i] & side_sets[j]:
                boundary_edges.append(key)

    # pair side S_{k+4} onto S_k through T_k, matching nearest positions
    pairs = []
    for k in range(4):
        src_side = [v for v in range(len(positions)) if (k + 4) % 8 in side_sets[v]]
        dst_side = [v for v in range(len(positions)) if k in side_sets[v]]
        dst_pos = positions_arr[dst_side]
        for v in src_side:
            image = G.generators[k].apply(positions_arr[v])
            j = int(np.argmin(np.abs(dst_pos - image)))
            if abs(dst_pos[j] - image) > 1e-8:
                raise MeshError(
                    f"side pairing mismatch: vertex {v} maps {abs(dst_pos[j]-image):.2e} "
                    "away from any partner"
                )
            pairs.append((v, dst_side[j], k))

    h0 = 4.0 / (1.0 - np.abs(positions_arr) ** 2) ** 2
    tri_masses = _disk_triangle_masses(positions_arr, tri_arr)
    weights = np.zeros(len(positions_arr))
    for i in range(3):
        np.add.at(weights, tri_arr[:, i], tri_masses / 3.0)
    _lens_corrections(positions_arr, boundary_edges, weights)

    mesh = _finalize(
        positions_arr, tri_arr, side_sets, pairs, h0, weights, False, refinementLevel
    )
    if mesh.eulerCharacteristic != -2:
        raise MeshError(f"Euler characteristic {mesh.eulerCharacteristic}, expected -2")
    return mesh


def build_torus_mesh(refinementLevel: int) -> SurfaceMesh:
    """Unit-square flat torus, 2^r x 2^r cells, h0 = 1 (solver test bed)."""
    if refinementLevel < 0:
        raise MeshError("refinementLevel must be >= 0")
    n = 2 ** refinementLevel
    idx = lambda i, j: j * (n + 1) + i
    positions = np.array(
        [complex(i / n, j / n) for j in range(n + 1) for i in range(n + 1)]
    )
    triangles = []
    for j in range(n):
        for i in range(n):
            triangles.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
            triangles.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))
    tri_arr = np.asarray(triangles, dtype=int)

    pairs = []
    for j in range(n + 1):
        pairs.append((idx(0, j), idx(n, j), 0))  # T_0: z -> z + 1
    for i in range(n + 1):
        pairs.append((idx(i, 0), idx(i, n), 1))  # T_1: z -> z + i

    h0 = np.ones(len(positions))
    areas = _flat_triangle_areas(positions, tri_arr)
    weights = np.zeros(len(positions))
    for i in range(3):
        np.add.at(weights, tri_arr[:, i], areas / 3.0)

    side_sets = [frozenset()] * len(positions)
    mesh = _finalize(positions, tri_arr, side_sets, pairs, h0, weights, True, refinementLevel)
    if mesh.eulerCharacteristic != 0:
        raise MeshError(f"Euler characteristic {mesh.eulerCharacteristic}, expected 0")
    return mesh


class LaplaceOperator:
    """Discrete Laplace-Beltrami of the background metric on canonical fields.

    apply(u) = -(K u) / m with K the flat cotangent stiffness (the 2D
    Dirichlet form is conformally invariant, so no h0 appears in K) and
    m the lumped background vertex volumes; this is (1/h0) * flat
    Laplacian in the weak sense.  K is PSD with constants as kernel.
    """

    def __init__(self, stiffness, mass):
        self.stiffness = stiffness
        self.mass = mass

    def apply(self, u):
        values = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
        return ScalarField(-(self.stiffness @ values) / self.mass)


_LAPLACIAN_CACHE: dict = {}


def assemble_laplacian(M: SurfaceMesh) -> LaplaceOperator:
    cached = _LAPLACIAN_CACHE.get(id(M))
    if cached is not None and cached[0] is M:
        return cached[1]
    pos = M.positions
    tri = M.triangles
    rows, cols, vals = [], [], []
    obtuse = 0
    p = [pos[tri[:, i]] for i in range(3)]
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        e1 = p[j] - p[i]
        e2 = p[k] - p[i]
        cross = np.imag(np.conj(e1) * e2)
        dot = np.real(np.conj(e1) * e2)
        cot = dot / cross  # cot of the angle at vertex i, opposite edge (j,k)
        obtuse += int(np.sum(cot < 0))
        ci = M.identify[tri[:, j]]
        cj = M.identify[tri[:, k]]
        w = 0.5 * cot
        rows.extend([ci, cj, ci, cj])
        cols.extend([cj, ci, ci, cj])
        vals.extend([-w, -w, w, w])
    if obtuse > len(tri) // 2:
        log.warning("obtuse-dominated mesh: %d negative cotangent weights", obtuse)
    n = M.canonicalCount
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    mass = np.bincount(M.identify, weights=M.vertexWeights, minlength=n)
    op = LaplaceOperator(K, mass)
    _LAPLACIAN_CACHE[id(M)] = (M, op)
    return op


def integrate(M: SurfaceMesh, f, g: MetricField | None = None) -> float:
    """Lumped integral of f against the volume form of g.

    The invariant ratio G/h0 is sampled per vertex copy and weighted by
    the exact lumped background volume, so the background metric itself
    is integrated to lens-quadrature accuracy rather than O(h^2).
    """
    if isinstance(f, ScalarField):
        f_full = f.values[M.identify]
    else:
        arr = np.asarray(f, dtype=float)
        if arr.ndim == 0:
            f_full = np.full(M.fullCount, float(arr))
        elif len(arr) == M.canonicalCount:
            f_full = arr[M.identify]
        elif len(arr) == M.fullCount:
            f_full = arr
        else:
            raise MeshError("field length matches neither canonical nor full count")
    if g is None:
        ratio = 1.0
    else:
        ratio = g.factor / M.h0
    return float(np.sum(M.vertexWeights * f_full * ratio))


def export_mesh(M: SurfaceMesh, path, fields: dict | None = None) -> None:
    """Plain-text mesh: header `V E F chi`, vertex/triangle/identification lines.

    Vertex lines are `index re im h0` plus one column per extra field
    (complex fields contribute two columns), all with 17 significant
    digits; then F lines `a b c`; then V lines `index canonical_index`.
    """
    fields = fields or {}
    cols = []
    names = []
    for name, values in fields.items():
        arr = np.asarray(values)
        full = arr if len(arr) == M.fullCount else arr[M.identify]
        if np.iscomplexobj(full):
            cols.extend([full.real, full.imag])
            names.extend([f"re_{name}", f"im_{name}"])
        else:
            cols.append(full.astype(float))
            names.append(name)
    lines = [f"{M.fullCount} {M.edgeCount} {len(M.triangles)} {M.eulerCharacteristic}"]
    if names:
        lines.append("# columns: index re im h0 " + " ".join(names))
    for v in range(M.fullCount):
        extras = "".join(f" {c[v]:.17g}" for c in cols)
        z = M.positions[v]
        lines.append(f"{v} {z.real:.17g} {z.imag:.17g} {M.h0[v]:.17g}{extras}")
    for a, b, c in M.triangles:
        lines.append(f"{a} {b} {c}")
    for v in range(M.fullCount):
        lines.append(f"{v} {M.identify[v]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path):
    """Inverse of export_mesh; returns (SurfaceMesh, extra-field dict).

    Lumped weights and boundary pairs are rebuilt from the geometry:
    torus mode is recognized by h0 = 1 everywhere.
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    v_count, e_count, f_count, chi = (int(x) for x in lines[0].split())
    cursor = 1
    names = []
    if lines[cursor].startswith("#"):
        names = lines[cursor].split(":")[1].split()[4:]
        cursor += 1
    positions = np.empty(v_count, dtype=complex)
    h0 = np.empty(v_count)
    extras = np.empty((v_count, len(names)))
    for i in range(v_count):
        parts = lines[cursor + i].split()
        positions[i] = complex(float(parts[1]), float(parts[2]))
        h0[i] = float(parts[3])
        for j in range(len(names)):
            extras[i, j] = float(parts[4 + j])
    cursor += v_count
    triangles = np.array(
        [[int(x) for x in lines[cursor + i].split()] for i in range(f_count)]
    )
    cursor += f_count
    identify = np.empty(v_count, dtype=int)
    for i in range(v_count):
        a, b = (int(x) for x in lines[cursor + i].split())
        identify[a] = b

    torus = bool(np.all(np.abs(h0 - 1.0) < 1e-13))
    if torus:
        areas = _flat_triangle_areas(positions, triangles)
        weights = np.zeros(v_count)
        for i in range(3):
            np.add.at(weights, triangles[:, i], areas / 3.0)
    else:
        tri_masses = _disk_triangle_masses(positions, triangles)
        weights = np.zeros(v_count)
        for i in range(3):
            np.add.at(weights, triangles[:, i], tri_masses / 3.0)
        counts = {}
        for tri in triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        boundary = [e for e, c in counts.items() if c == 1]
        _lens_corrections(positions, boundary, weights)

    mesh = SurfaceMesh(
        positions=positions,
        triangles=triangles,
        identify=identify,
        canonicalCount=int(identify.max()) + 1,
        h0=h0,
        vertexWeights=weights,
        boundaryPairs=[],
        edgeCount=e_count,
        eulerCharacteristic=chi,
        torus=torus,
        refinement=-1,
    )
    field_map = {}
    i = 0
    while i < len(names):
        if names[i].startswith("re_") and i + 1 < len(names) and names[i + 1] == "im_" + names[i][3:]:
            field_map[names[i][3:]] = extras[:, i] + 1j * extras[:, i + 1]
            i += 2
        else:
            field_map[names[i]] = extras[:, i]
            i += 1
    return mesh, field_map
