"""Orbit growth of deck transformations measured on a graph model of
the universal cover.

Every deck tile carries a copy of the chart mesh; edge weights are
Euclidean edge lengths times the averaged square root of the conformal
factor, and identified side vertices of adjacent tiles are joined by
zero-weight gluing edges, so paths cross tile boundaries exactly at the
seam points.  Marked basepoint copies, one per tile, realize the orbit
of the basepoint, and the exponential growth rate of the orbit count
N(R) is read off by a least-squares fit of log N(R) on a radius window.

Graph paths are constrained to mesh edges, so graph distances
overestimate true distances and the fitted rate is biased low; the
estimate is an underestimate-flavoured proxy and is reported as such.
The horizon radius bounds the region provably unaffected by truncating
the cover at finite word length: any path into the missing tiles must
pass a boundary vertex whose gluing edge is absent, so no distance
below the minimum over those vertices can be distorted.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import DomainError, GraphError, InsufficientData, IoError, ResourceError
from .fuchsian import _canonical_rows, enumerate_group, inverse_letter

log = logging.getLogger(__name__)

GRID_POINTS = 32
DEFAULT_WINDOW = (0.4, 0.9)
SPARSE_WINDOW_COUNT = 50

_TILE_CACHE: dict = {}


@dataclass
class CoverGraph:
    """Weighted graph over (tile, chart vertex) nodes.

    ``weights`` stores each undirected edge once; traversal treats it
    as symmetric.  Node ``t * vertexCount + v`` is tile ``t``'s copy of
    chart vertex ``v``; copies of one cover point in adjacent tiles are
    joined by explicit zero-weight entries.  ``basepointCopies[t]`` is
    the marked node of tile ``t`` and ``ungluedNodes`` lists boundary
    vertices whose partner tile is outside the enumerated ball.
    """

    tiles: list
    tileLengths: np.ndarray
    vertexCount: int
    weights: sp.csr_matrix
    basepoint: int
    basepointCopies: np.ndarray
    ungluedNodes: np.ndarray
    depth: int
    torus: bool
    _distances: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class EntropyEstimate:
    """Fitted orbit growth rate over a radius window.

    ``slope`` underestimates the true exponential rate near the
    horizon; ``sparseWindow`` flags windows holding fewer than
    SPARSE_WINDOW_COUNT orbit points, where the fit is unreliable.
    """

    slope: float
    window: tuple
    counts: tuple
    horizonRadius: float
    stderr: float
    sparseWindow: bool


def _torus_tiles(depth):
    """Translation tiles (p, q) with sup-norm <= depth, plus neighbors."""
    rng = range(-depth, depth + 1)
    tiles = sorted(((p, q) for p in rng for q in rng), key=lambda t: (max(abs(t[0]), abs(t[1])), t))
    index = {t: i for i, t in enumerate(tiles)}
    steps = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    nbr = np.full((len(tiles), 4), -1, dtype=np.int64)
    for i, (p, q) in enumerate(tiles):
        for k, (dp, dq) in enumerate(steps):
            nbr[i, k] = index.get((p + dp, q + dq), -1)
    lengths = np.array([max(abs(p), abs(q)) for p, q in tiles])
    return tiles, lengths, nbr


# fixed projection used only to spread rows for the sort key; matching
# is always confirmed on all components, so the choice cannot affect
# correctness, only cluster sizes
_PROJECTION = np.array([0.9341723589627157, -0.3912846071224755, 0.1773133067798372,
                        -0.8104924959312217, 0.5586231914624827, -0.2718349814217633,
                        0.6673400241462359, -0.0924622902347581])


def _match_rows(base, queries, tol=1e-9):
    """Index into ``base`` of each query row, -1 when absent.

    Candidate rows are located by a tolerance band on a fixed linear
    projection (column 0 alone clusters badly: symmetric elements share
    matrix entries), then confirmed on all components, so rounding can
    never split a match.
    """
    scale = max(1.0, float(np.max(np.abs(base))))
    atol = tol * scale
    band = atol * float(np.sum(np.abs(_PROJECTION)))
    base_p = base @ _PROJECTION
    query_p = queries @ _PROJECTION
    order = np.argsort(base_p, kind="stable")
    keys = base_p[order]
    lo = np.searchsorted(keys, query_p - band, side="left")
    hi = np.searchsorted(keys, query_p + band, side="right")
    out = np.full(len(queries), -1, dtype=np.int64)
    single = hi - lo == 1
    cand = order[np.minimum(lo, len(base) - 1)]
    ok = single & (np.max(np.abs(base[cand] - queries), axis=1) <= atol)
    out[ok] = cand[ok]
    for q in np.nonzero(hi - lo > 1)[0]:
        for j in order[lo[q] : hi[q]]:
            if np.max(np.abs(base[j] - queries[q])) <= atol:
                out[q] = j
                break
    return out


def _octagon_tiles(G, depth, cap):
    key = (id(G), depth)
    entry = _TILE_CACHE.get(key)
    if entry is not None and entry[0] is G:
        return entry[1], entry[2], entry[3]
    elements = enumerate_group(G, depth, cap=cap)
    mats = np.stack([e.matrix() for e in elements])
    lengths = np.array([len(e.word) for e in elements])
    base_rows = _canonical_rows(mats)
    gens = np.stack([g.matrix() for g in G.generators])
    nbr = np.empty((len(elements), 8), dtype=np.int64)
    for k in range(8):
        prod = np.einsum("nij,jk->nik", mats, gens[k])
        nbr[:, k] = _match_rows(base_rows, _canonical_rows(prod))
    _TILE_CACHE[key] = (G, elements, lengths, nbr)
    return elements, lengths, nbr


def build_cover_graph(M, g, G, depth, cap=40_000_000):
    """Assemble the lifted metric graph for tiles of word length <= depth.

    ``g`` is a metric field on ``M``'s chart; its factor enters edge
    weights through the average of its square root at the endpoints.
    On torus meshes the deck group is the translation lattice and ``G``
    is ignored.  Raises ResourceError when the node count would exceed
    ``cap`` and GraphError when a tile below the frontier is missing a
    glued neighbor.
    """
    if depth < 1:
        raise DomainError("cover depth must be >= 1")
    factor = np.asarray(g.factor, dtype=float)
    if factor.shape != (len(M.positions),):
        raise DomainError("metric factor does not match the mesh vertex count")
    if not np.all(np.isfinite(factor)) or np.any(factor < 0):
        raise DomainError("metric factor must be finite and nonnegative")

    if M.torus:
        tiles, lengths, nbr = _torus_tiles(depth)
        inv = {0: 2, 1: 3, 2: 0, 3: 1}
    else:
        if G is None:
            raise DomainError("a deck group is required for disk meshes")
        tiles, lengths, nbr = _octagon_tiles(G, depth, cap)
        inv = {k: inverse_letter(k) for k in range(8)}

    V = len(M.positions)
    n_tiles = len(tiles)
    n_nodes = n_tiles * V
    if n_nodes > cap:
        raise ResourceError(f"cover graph needs {n_nodes} nodes, cap={cap}")

    interior = lengths < depth
    if np.any(nbr[interior] < 0):
        raise GraphError("tile below the frontier is missing a glued neighbor")

    edges = M.edges()
    z = M.positions
    s = np.sqrt(factor)
    edge_w = np.abs(z[edges[:, 0]] - z[edges[:, 1]]) * 0.5 * (s[edges[:, 0]] + s[edges[:, 1]])

    itype = np.int32 if n_nodes < 2**31 else np.int64
    base = (np.arange(n_tiles, dtype=np.int64) * V).astype(itype)
    rows = [(base[:, None] + edges[None, :, 0].astype(itype)).ravel()]
    cols = [(base[:, None] + edges[None, :, 1].astype(itype)).ravel()]
    data = [np.broadcast_to(edge_w, (n_tiles, len(edge_w))).ravel().copy()]

    boundary = set()
    unglued = []
    for src, dst, k in M.boundaryPairs:
        if not (0 <= src < V and 0 <= dst < V and k in inv):
            raise GraphError(f"boundary pair ({src}, {dst}, {k}) is malformed")
        boundary.add(src)
        boundary.add(dst)
        nb = nbr[:, k]
        present = nb >= 0
        rows.append(base[present] + itype(dst))
        cols.append((nb[present] * V + src).astype(itype))
        data.append(np.zeros(int(np.sum(present))))
        unglued.append(base[~present] + itype(dst))
        back = nbr[:, inv[k]] < 0
        unglued.append(base[back] + itype(src))

    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_nodes, n_nodes),
    ).tocsr()

    interior_verts = np.setdiff1d(np.arange(V), np.fromiter(boundary, dtype=int))
    if len(interior_verts) == 0:
        raise GraphError("mesh has no interior vertex to serve as basepoint")
    v0 = int(interior_verts[np.argmin(np.abs(z[interior_verts]))])

    return CoverGraph(
        tiles=tiles,
        tileLengths=lengths,
        vertexCount=V,
        weights=matrix,
        basepoint=v0,
        basepointCopies=np.arange(n_tiles, dtype=np.int64) * V + v0,
        ungluedNodes=np.unique(np.concatenate(unglued)) if unglued else np.array([], dtype=np.int64),
        depth=depth,
        torus=M.torus,
    )


def _all_distances(C):
    if C._distances is None:
        dist = dijkstra(C.weights, directed=False, indices=C.basepoint)
        bad = int(np.sum(~np.isfinite(dist)))
        if bad:
            raise GraphError(f"{bad} cover nodes unreachable from the basepoint")
        C._distances = dist
    return C._distances


def orbit_distances(C):
    """Graph distance from the basepoint to its marked copy in each tile."""
    d = _all_distances(C)[C.basepointCopies]
    return list(zip(C.tiles, d.tolist()))


def horizon_radius(C):
    """Largest radius provably unaffected by the depth truncation."""
    d = _all_distances(C)
    if len(C.ungluedNodes) == 0:
        return float("inf")
    return float(np.min(d[C.ungluedNodes]))


def _distance_values(distances):
    arr = list(distances)
    if arr and isinstance(arr[0], (tuple, list)):
        arr = [t[1] for t in arr]
    values = np.asarray(arr, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise DomainError("distances must be a nonempty sequence of reals")
    return np.sort(values)


def estimate_entropy(distances, horizonRadius, window=None):
    """Least-squares growth rate of log N(R) on a radius window.

    ``distances`` is either a plain sequence of orbit distances or the
    (tile, distance) pairs from orbit_distances.  The window defaults
    to DEFAULT_WINDOW fractions of the horizon and must sit inside
    (0, horizonRadius].  Raises InsufficientData when fewer than 10
    orbit points lie below the window top.
    """
    values = _distance_values(distances)
    if not np.isfinite(horizonRadius) and window is None:
        raise DomainError("an explicit window is required with an unbounded horizon")
    if window is None:
        window = (DEFAULT_WINDOW[0] * horizonRadius, DEFAULT_WINDOW[1] * horizonRadius)
    lo, hi = float(window[0]), float(window[1])
    if not (0.0 < lo < hi) or hi > horizonRadius * (1.0 + 1e-12):
        raise DomainError(f"window ({lo}, {hi}) must sit inside (0, {horizonRadius}]")

    below = int(np.searchsorted(values, hi, side="right"))
    if below < 10:
        raise InsufficientData(f"{below} orbit points below R={hi}; need at least 10")
    in_window = below - int(np.searchsorted(values, lo, side="left"))

    grid = np.linspace(lo, hi, GRID_POINTS)
    counts = np.searchsorted(values, grid, side="right")
    y = np.log(counts)
    x_c = grid - grid.mean()
    slope = float(np.dot(x_c, y - y.mean()) / np.dot(x_c, x_c))
    resid = y - y.mean() - slope * x_c
    stderr = float(np.sqrt(np.dot(resid, resid) / (GRID_POINTS - 2) / np.dot(x_c, x_c)))

    sparse = in_window < SPARSE_WINDOW_COUNT
    if sparse:
        log.warning("entropy window holds only %d orbit points; fit is unreliable", in_window)
    return EntropyEstimate(
        slope=slope,
        window=(lo, hi),
        counts=tuple((float(r), int(n)) for r, n in zip(grid, counts)),
        horizonRadius=float(horizonRadius),
        stderr=stderr,
        sparseWindow=sparse,
    )


def cover_entropy(C, window=None):
    """Convenience wrapper: estimate straight from a cover graph."""
    d = _all_distances(C)[C.basepointCopies]
    return estimate_entropy(d, horizon_radius(C), window)


def counts_csv(estimate):
    """Orbit counts as CSV text with columns R, N, logN."""
    lines = ["R,N,logN"]
    for r, n in estimate.counts:
        lines.append(f"{r:.17g},{n},{np.log(n):.17g}")
    return "\n".join(lines) + "\n"


def write_counts(estimate, path):
    try:
        with open(path, "w") as fh:
            fh.write(counts_csv(estimate))
    except OSError as exc:
        raise IoError(f"cannot write counts file {path}: {exc}") from exc
