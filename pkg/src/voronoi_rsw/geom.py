"""Poisson sampling and exact Delaunay/Voronoi geometry on padded windows.

The production triangulation is built by Qhull (scipy.spatial.Delaunay) and
then repaired to exact semantics: every interior edge is checked with a
filtered incircle predicate, misclassified or cocircular edges are fixed by
Lawson flips, and exact ties are resolved by a documented rule (the diagonal
of a cocircular quad keeps the lowest-indexed site).  Degenerate inputs
(fewer than 3 sites, or all sites collinear) fall back to a slab Voronoi
structure instead of crashing.

A determinism certificate bounds the largest empty circle met by a query
region; when it holds, no event decided inside the region can be affected
by sites outside the sampled territory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import spatial

from . import predicates
from .streams import Stream, as_stream

__all__ = [
    "Rect",
    "SquareAnnulus",
    "Segment",
    "PointSample",
    "Triangulation",
    "VoronoiCellView",
    "sample_poisson",
    "extend_sample",
    "delaunay",
    "nearest_site",
    "max_nearest_distance",
    "determinism_certificate",
    "default_margin",
    "region_rects",
    "dilate_region",
    "shell_rects",
    "region_covered",
    "distance_to_unsampled",
]


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        vals = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite rectangle bounds {vals}")
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"inverted rectangle {vals}")

    @property
    def lo(self):
        return (self.x0, self.y0)

    @property
    def hi(self):
        return (self.x1, self.y1)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def dilate(self, d: float) -> "Rect":
        return Rect(self.x0 - d, self.y0 - d, self.x1 + d, self.y1 + d)

    def corners(self) -> np.ndarray:
        return np.array(
            [[self.x0, self.y0], [self.x1, self.y0],
             [self.x1, self.y1], [self.x0, self.y1]]
        )

    def sides(self) -> dict[str, "Segment"]:
        return {
            "left": Segment((self.x0, self.y0), (self.x0, self.y1)),
            "right": Segment((self.x1, self.y0), (self.x1, self.y1)),
            "bottom": Segment((self.x0, self.y0), (self.x1, self.y0)),
            "top": Segment((self.x0, self.y1), (self.x1, self.y1)),
        }

    def contains_rect(self, other: "Rect") -> bool:
        return (self.x0 <= other.x0 and other.x1 <= self.x1
                and self.y0 <= other.y0 and other.y1 <= self.y1)

    def overlaps_open(self, other: "Rect") -> bool:
        """True iff the interiors intersect."""
        return (self.x0 < other.x1 and other.x0 < self.x1
                and self.y0 < other.y1 and other.y0 < self.y1)


@dataclass(frozen=True)
class SquareAnnulus:
    """Closed square annulus: B_b minus the open interior of B_a, centered at (cx, cy)."""

    a: float
    b: float
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.a < self.b):
            raise ValueError(f"annulus needs 0 <= a < b, got a={self.a}, b={self.b}")

    @property
    def outer(self) -> Rect:
        return Rect(self.cx - self.b, self.cy - self.b, self.cx + self.b, self.cy + self.b)

    @property
    def hole(self) -> Rect:
        return Rect(self.cx - self.a, self.cy - self.a, self.cx + self.a, self.cy + self.a)

    def strips(self) -> list[Rect]:
        """Four overlapping closed convex strips whose union is the annulus."""
        a, b, cx, cy = self.a, self.b, self.cx, self.cy
        return [
            Rect(cx - b, cy - b, cx - a, cy + b),   # left
            Rect(cx + a, cy - b, cx + b, cy + b),   # right
            Rect(cx - b, cy - b, cx + b, cy - a),   # bottom
            Rect(cx - b, cy + a, cx + b, cy + b),   # top
        ]

    def inner_sides(self) -> dict[str, "Segment"]:
        """Sides of the hole boundary, keyed by the strip that contains them."""
        a, cx, cy = self.a, self.cx, self.cy
        return {
            "left": Segment((cx - a, cy - a), (cx - a, cy + a)),
            "right": Segment((cx + a, cy - a), (cx + a, cy + a)),
            "bottom": Segment((cx - a, cy - a), (cx + a, cy - a)),
            "top": Segment((cx - a, cy + a), (cx + a, cy + a)),
        }

    def outer_sides(self) -> dict[str, "Segment"]:
        return self.outer.sides()

    def dilate(self, d: float):
        a = self.a - d
        if a <= 0:
            return Rect(self.cx - self.b - d, self.cy - self.b - d,
                        self.cx + self.b + d, self.cy + self.b + d)
        return SquareAnnulus(a, self.b + d, self.cx, self.cy)


Region = Rect | SquareAnnulus


@dataclass(frozen=True)
class Segment:
    """Closed segment between two points (degenerate point segments allowed)."""

    p0: tuple[float, float]
    p1: tuple[float, float]


def region_rects(region: Region) -> list[Rect]:
    """Decompose a region into rectangles whose union is the region.

    The rectangles overlap only on measure-zero seams, so they can be used
    both for sampling plans and for coverage tests.
    """
    if isinstance(region, Rect):
        return [region]
    a, b, cx, cy = region.a, region.b, region.cx, region.cy
    return [
        Rect(cx - b, cy - b, cx - a, cy + b),
        Rect(cx + a, cy - b, cx + b, cy + b),
        Rect(cx - a, cy - b, cx + a, cy - a),
        Rect(cx - a, cy + a, cx + a, cy + b),
    ]


def dilate_region(region: Region, d: float) -> Region:
    return region.dilate(d)


# --- rectangle algebra (exact on float bounds) -----------------------------


def rect_subtract(r: Rect, cut: Rect) -> list[Rect]:
    """r minus cut, as a list of non-overlapping rectangles (area-exact)."""
    if not r.overlaps_open(cut):
        return [r]
    out = []
    x0, y0, x1, y1 = r.x0, r.y0, r.x1, r.y1
    if cut.y0 > y0:
        out.append(Rect(x0, y0, x1, min(cut.y0, y1)))
    if cut.y1 < y1:
        out.append(Rect(x0, max(cut.y1, y0), x1, y1))
    my0, my1 = max(y0, cut.y0), min(y1, cut.y1)
    if my0 < my1:
        if cut.x0 > x0:
            out.append(Rect(x0, my0, min(cut.x0, x1), my1))
        if cut.x1 < x1:
            out.append(Rect(max(cut.x1, x0), my0, x1, my1))
    return [p for p in out if p.area > 0]


def subtract_union(pieces: list[Rect], cutters: list[Rect]) -> list[Rect]:
    for cut in cutters:
        nxt = []
        for p in pieces:
            nxt.extend(rect_subtract(p, cut))
        pieces = nxt
    return pieces


def region_covered(region: Region, windows: tuple[Rect, ...]) -> bool:
    """True iff the region is covered (up to measure zero) by the windows."""
    leftovers = subtract_union(region_rects(region), list(windows))
    return not leftovers


def shell_rects(base: Region, m0: float, m1: float) -> list[Rect]:
    """Rectangles of dilate(base, m1) minus dilate(base, m0), m1 > m0 >= 0."""
    return subtract_union(region_rects(base.dilate(m1)),
                          region_rects(base.dilate(m0)))


def _dist_rect_rect(r1: Rect, r2: Rect) -> float:
    dx = max(r1.x0 - r2.x1, r2.x0 - r1.x1, 0.0)
    dy = max(r1.y0 - r2.y1, r2.y0 - r1.y1, 0.0)
    return math.hypot(dx, dy)


def distance_to_unsampled(region: Region, windows: tuple[Rect, ...]) -> float:
    """Euclidean distance from the region to the complement of the windows."""
    rects = region_rects(region)
    xs0 = min(w.x0 for w in windows)
    ys0 = min(w.y0 for w in windows)
    xs1 = max(w.x1 for w in windows)
    ys1 = max(w.y1 for w in windows)
    bbox = Rect(xs0, ys0, xs1, ys1)
    holes = subtract_union([bbox], list(windows))
    best = math.inf
    for r in rects:
        best = min(best, r.x0 - bbox.x0, bbox.x1 - r.x1,
                   r.y0 - bbox.y0, bbox.y1 - r.y1)
        for h in holes:
            best = min(best, _dist_rect_rect(r, h))
    return max(best, 0.0)


def default_margin(intensity: float) -> float:
    """Default certification padding: 4 / sqrt(intensity)."""
    return 4.0 / math.sqrt(intensity)


# ---------------------------------------------------------------------------
# Poisson sampling


@dataclass(frozen=True)
class PointSample:
    """Sites of a Poisson process restricted to a union of disjoint windows."""

    sites: np.ndarray                       # (n, 2) float64, read-only
    windows: tuple[Rect, ...]               # pairwise interior-disjoint
    intensity: float
    provenance: tuple[tuple[str, Rect], ...]

    def __post_init__(self):
        self.sites.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.sites)


def _sample_rect(rect: Rect, intensity: float, gen: np.random.Generator) -> np.ndarray:
    area = rect.area
    k = int(gen.poisson(area * intensity)) if area > 0 else 0
    pts = gen.uniform(size=(k, 2))
    pts[:, 0] = rect.x0 + pts[:, 0] * rect.width
    pts[:, 1] = rect.y0 + pts[:, 1] * rect.height
    return pts


def sample_poisson(region, intensity: float, stream) -> PointSample:
    """Sample a Poisson(intensity) process on a Rect or a union of Rects.

    Zero-area windows contribute no points.  The stream fully determines
    the sample.
    """
    if not (intensity > 0) or not math.isfinite(intensity):
        raise ValueError(f"intensity must be positive, got {intensity}")
    stream = as_stream(stream)
    rects = [region] if isinstance(region, Rect) else list(region)
    for i, r in enumerate(rects):
        for r2 in rects[i + 1:]:
            if r.overlaps_open(r2):
                raise ValueError(f"sampling windows overlap: {r} and {r2}")
    parts = [_sample_rect(r, intensity, stream.gen) for r in rects]
    sites = np.concatenate(parts, axis=0) if parts else np.empty((0, 2))
    prov = tuple((stream.id, r) for r in rects)
    return PointSample(sites=sites, windows=tuple(rects),
                       intensity=intensity, provenance=prov)


def extend_sample(sample: PointSample, extra, stream) -> PointSample:
    """Extend a sample by disjoint window(s); the law equals direct sampling
    of the union, by independence of the Poisson process on disjoint sets."""
    rects = [extra] if isinstance(extra, Rect) else list(extra)
    rects = [r for r in rects if r.area > 0]
    if not rects:
        return sample
    stream = as_stream(stream)
    for r in rects:
        for w in sample.windows:
            if r.overlaps_open(w):
                raise ValueError(
                    f"extension window {r} overlaps sampled region {w}; "
                    "this would bias the law")
        for i, r2 in enumerate(rects):
            if r2 is not r and r.overlaps_open(r2):
                raise ValueError(f"extension windows overlap: {r} and {r2}")
    parts = [_sample_rect(r, sample.intensity, stream.gen) for r in rects]
    sites = np.concatenate([sample.sites] + parts, axis=0)
    prov = sample.provenance + tuple((stream.id, r) for r in rects)
    return PointSample(sites=sites, windows=sample.windows + tuple(rects),
                       intensity=sample.intensity, provenance=prov)


# ---------------------------------------------------------------------------
# triangulation


class Triangulation:
    """Delaunay triangulation plus the dual Voronoi facet structure.

    Attributes
    ----------
    points : (n, 2) array of sites (shared with the sample)
    simplices : (m, 3) int32, CCW triangles
    neighbors : (m, 3) int32 neighbor triangle per opposite vertex, -1 = hull
    circumcenters, circumradius2 : per-triangle dual vertex and squared radius
    edges : (E, 2) undirected Delaunay site pairs
    facet_p0, facet_p1 : per-edge Voronoi facet endpoints (rays clipped to bbox)
    facet_valid : per-edge flag (False when the facet misses the clip box)
    vnv : CSR (indptr, indices) site adjacency
    degenerate : True for n < 3 or all-collinear inputs (slab Voronoi)
    coincident_groups : site groups meeting at an exactly degenerate Voronoi
        vertex (cocircular k-gons); [] almost surely.
    """

    def __init__(self, points: np.ndarray, bbox: Rect):
        self.points = points
        self.bbox = bbox
        self.simplices = np.empty((0, 3), dtype=np.int32)
        self.neighbors = np.empty((0, 3), dtype=np.int32)
        self.circumcenters = np.empty((0, 2))
        self.circumradius2 = np.empty((0,))
        self.edges = np.empty((0, 2), dtype=np.int32)
        self.edge_tris = np.empty((0, 2), dtype=np.int32)
        self.facet_p0 = np.empty((0, 2))
        self.facet_p1 = np.empty((0, 2))
        self.facet_valid = np.empty((0,), dtype=bool)
        self.vnv = (np.zeros(len(points) + 1, dtype=np.int64),
                    np.empty(0, dtype=np.int32))
        self.degenerate = False
        self.coincident_groups: list[np.ndarray] = []

    @property
    def n(self) -> int:
        return len(self.points)

    def neighbors_of(self, i: int) -> np.ndarray:
        indptr, indices = self.vnv
        return indices[indptr[i]:indptr[i + 1]]


def _check_duplicates(points: np.ndarray):
    if len(points) < 2:
        return
    order = np.lexsort((points[:, 1], points[:, 0]))
    srt = points[order]
    dup = np.all(srt[1:] == srt[:-1], axis=1)
    if dup.any():
        k = int(np.flatnonzero(dup)[0])
        raise ValueError(f"duplicate site at {tuple(srt[k])}")


def _all_collinear(points: np.ndarray) -> bool:
    n = len(points)
    if n <= 2:
        return True
    a = points[0]
    # first point distinct from a (duplicates were rejected)
    b = points[1]
    det, amb = predicates.orient2d_filter(
        a[0], a[1], b[0], b[1], points[2:, 0], points[2:, 1])
    if np.any((det != 0) & ~amb):
        return False
    for idx in np.flatnonzero(amb | (det == 0)):
        c = points[2 + idx]
        if predicates.orient2d(a[0], a[1], b[0], b[1], c[0], c[1]) != 0:
            return False
    return True


def _circumcenters(points, simplices):
    a = points[simplices[:, 0]]
    b = points[simplices[:, 1]] - a
    c = points[simplices[:, 2]] - a
    d = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    b2 = b[:, 0] ** 2 + b[:, 1] ** 2
    c2 = c[:, 0] ** 2 + c[:, 1] ** 2
    ux = (c[:, 1] * b2 - b[:, 1] * c2) / d
    uy = (b[:, 0] * c2 - c[:, 0] * b2) / d
    cc = a + np.stack([ux, uy], axis=1)
    r2 = ux * ux + uy * uy
    return cc, r2


def _orient_ccw(points, simplices):
    """Return simplices reordered to exact CCW orientation."""
    a = points[simplices[:, 0]]
    b = points[simplices[:, 1]]
    c = points[simplices[:, 2]]
    det, amb = predicates.orient2d_filter(a[:, 0], a[:, 1], b[:, 0], b[:, 1],
                                          c[:, 0], c[:, 1])
    flip = det < 0
    for t in np.flatnonzero(amb):
        s = predicates.orient2d(*points[simplices[t, 0]], *points[simplices[t, 1]],
                                *points[simplices[t, 2]])
        if s == 0:
            raise ValueError("degenerate zero-area triangle in triangulation")
        flip[t] = s < 0
    return flip


def _ray_exit_t(origin, direction, bbox: Rect) -> float:
    """Largest t >= 0 with origin + t*direction inside bbox (-inf if none)."""
    t0, t1 = 0.0, math.inf
    for o, d, lo, hi in ((origin[0], direction[0], bbox.x0, bbox.x1),
                         (origin[1], direction[1], bbox.y0, bbox.y1)):
        if d == 0.0:
            if o < lo or o > hi:
                return -math.inf
            continue
        ta, tb = (lo - o) / d, (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
    return t1 if t0 <= t1 else -math.inf


class _LawsonState:
    """Mutable triangle soup for the exactness repair pass."""

    def __init__(self, points, simplices, neighbors):
        self.points = points
        self.simplices = simplices
        self.neighbors = neighbors
        self.cocircular: list[tuple[int, int, int, int]] = []

    def opposite_vertex(self, t: int, nb: int) -> int:
        """Vertex of nb not shared with t; also its local index."""
        for k in range(3):
            if self.neighbors[nb, k] == t:
                return k
        raise RuntimeError("inconsistent neighbor structure")

    def edge_status(self, t: int, k: int):
        """Check edge opposite local vertex k of triangle t.

        Returns (legal, cocircular_quad) where legal=False requests a flip.
        """
        nb = self.neighbors[t, k]
        if nb < 0:
            return True, None
        s = self.simplices
        a = s[t, k]
        b = s[t, (k + 1) % 3]
        c = s[t, (k + 2) % 3]
        kn = self.opposite_vertex(t, nb)
        d = s[nb, kn]
        p = self.points
        sign = predicates.incircle(*p[a], *p[b], *p[c], *p[d])
        if sign > 0:
            return False, None
        if sign == 0:
            quad = (int(a), int(b), int(c), int(d))
            # tie-break: the kept diagonal must contain the lowest index
            if min(a, d) < min(b, c):
                return False, quad
            return True, quad
        return True, None

    def flip(self, t: int, k: int):
        """Lawson flip of the edge opposite vertex k of triangle t.

        With t = (a, b, c) CCW and d the far vertex of the neighbor across
        edge (b, c), replaces the diagonal (b, c) of the convex quad
        a, b, d, c by (a, d).  Returns the four outer (triangle, local_vertex)
        edges to re-examine.
        """
        s, nbrs = self.simplices, self.neighbors
        nb = int(nbrs[t, k])
        kn = self.opposite_vertex(t, nb)
        a = int(s[t, k])
        b = int(s[t, (k + 1) % 3])
        c = int(s[t, (k + 2) % 3])
        d = int(s[nb, kn])

        def nb_across(tri, u, v):
            """(neighbor, local index) of `tri` across edge {u, v}."""
            for kk in range(3):
                e1 = int(s[tri, (kk + 1) % 3])
                e2 = int(s[tri, (kk + 2) % 3])
                if {e1, e2} == {u, v}:
                    return int(nbrs[tri, kk]), kk
            raise RuntimeError("edge not found in triangle")

        t_ab, _ = nb_across(t, a, b)
        t_ca, _ = nb_across(t, c, a)
        nb_db, _ = nb_across(nb, d, b)
        nb_cd, _ = nb_across(nb, c, d)

        s[t] = (a, b, d)
        s[nb] = (a, d, c)

        def set_nb(tri, u, v, val):
            _, kk = nb_across(tri, u, v)
            nbrs[tri, kk] = val

        set_nb(t, a, b, t_ab)
        set_nb(t, b, d, nb_db)
        set_nb(t, d, a, nb)
        set_nb(nb, a, d, t)
        set_nb(nb, d, c, nb_cd)
        set_nb(nb, c, a, t_ca)

        tv = {a, b, d}
        nv = {a, d, c}
        for other in (t_ab, t_ca, nb_db, nb_cd):
            if other < 0:
                continue
            for kk in range(3):
                if nbrs[other, kk] in (t, nb):
                    uv = {int(s[other, (kk + 1) % 3]), int(s[other, (kk + 2) % 3])}
                    nbrs[other, kk] = t if uv <= tv else nb

        out = []
        for tri, u, v in ((t, a, b), (t, b, d), (nb, d, c), (nb, c, a)):
            _, kk = nb_across(tri, u, v)
            out.append((tri, kk))
        return out


def _repair(points, simplices, neighbors):
    """Make the Qhull triangulation exactly Delaunay under the tie-break.

    Returns (simplices, neighbors, cocircular_quads).  Almost surely a
    no-op: the vectorized incircle filter finds no ambiguous or illegal
    edge on continuous random input.
    """
    m = len(simplices)
    if m == 0:
        return simplices, neighbors, [], False
    p = points
    rows_t, rows_k = np.divmod(np.arange(3 * m), 3)
    nb = neighbors[rows_t, rows_k]
    keep = nb >= 0
    rows_t, rows_k, nb = rows_t[keep], rows_k[keep], nb[keep]
    keep = nb > rows_t
    rows_t, rows_k, nb = rows_t[keep], rows_k[keep], nb[keep]

    a = simplices[rows_t, rows_k]
    b = simplices[rows_t, (rows_k + 1) % 3]
    c = simplices[rows_t, (rows_k + 2) % 3]
    # opposite vertex of nb: position where neighbors[nb] == t
    opp_pos = np.argmax(neighbors[nb] == rows_t[:, None], axis=1)
    d = simplices[nb, opp_pos]

    det, amb = predicates.incircle_filter(
        p[a, 0], p[a, 1], p[b, 0], p[b, 1], p[c, 0], p[c, 1], p[d, 0], p[d, 1])
    suspicious = amb | (det > 0)
    if not suspicious.any():
        return simplices, neighbors, [], False

    state = _LawsonState(points, simplices.copy(), neighbors.copy())
    work = [(int(t), int(k)) for t, k in zip(rows_t[suspicious], rows_k[suspicious])]
    cocircular: set[tuple[int, ...]] = set()
    budget = 20 * m + 100
    flipped = False
    while work:
        budget -= 1
        if budget < 0:
            raise RuntimeError("Lawson repair did not terminate")
        t, k = work.pop()
        if state.neighbors[t, k] < 0:
            continue
        legal, quad = state.edge_status(t, k)
        if quad is not None:
            cocircular.add(tuple(sorted(quad)))
        if not legal:
            flipped = True
            work.extend(state.flip(t, k))
    return state.simplices, state.neighbors, [np.array(q) for q in cocircular], flipped


def _coincident_groups(points, simplices, quads):
    """Exactly-degenerate Voronoi vertices discovered during repair.

    A cocircular quad only marks a degenerate vertex when its common
    circumcenter has no strictly closer site (quads examined mid-repair can
    sit on non-empty circles); the returned group is the full set of sites
    at exactly minimal distance.
    """
    if not quads:
        return []
    centers = {}
    for q in quads:
        cc = predicates.circumcenter_exact(points[q[0]], points[q[1]], points[q[2]])
        centers.setdefault(cc, q[0])
    groups = []
    for (cx, cy), probe in centers.items():
        d2 = [(Fraction(float(x)) - cx) ** 2 + (Fraction(float(y)) - cy) ** 2
              for x, y in points]
        dmin = min(d2)
        group = [k for k, v in enumerate(d2) if v == dmin]
        if len(group) >= 4:
            groups.append(np.array(group))
    return groups


def _build_facets(tri: Triangulation):
    """Voronoi facet endpoints per Delaunay edge, rays clipped to the bbox."""
    pts, bbox = tri.points, tri.bbox
    if tri.degenerate:
        # slab Voronoi: facet between consecutive sites = bisector line
        E = len(tri.edges)
        p0 = np.empty((E, 2))
        p1 = np.empty((E, 2))
        valid = np.zeros(E, dtype=bool)
        for e, (i, j) in enumerate(tri.edges):
            zi, zj = pts[i], pts[j]
            mid = (zi + zj) / 2.0
            d = np.array([-(zj[1] - zi[1]), zj[0] - zi[0]])
            tb = _ray_exit_t(mid, d, bbox)
            ta = _ray_exit_t(mid, -d, bbox)
            if tb == -math.inf and ta == -math.inf:
                p0[e] = p1[e] = mid
                continue
            tb = max(tb, 0.0)
            ta = max(ta, 0.0)
            p0[e] = mid - ta * d
            p1[e] = mid + tb * d
            valid[e] = True
        tri.facet_p0, tri.facet_p1, tri.facet_valid = p0, p1, valid
        return

    cc = tri.circumcenters
    E = len(tri.edges)
    p0 = cc[tri.edge_tris[:, 0]].copy()
    p1 = np.empty((E, 2))
    valid = np.ones(E, dtype=bool)
    interior = tri.edge_tris[:, 1] >= 0
    p1[interior] = cc[tri.edge_tris[interior, 1]]

    hull = np.flatnonzero(~interior)
    if len(hull):
        i = tri.edges[hull, 0]
        j = tri.edges[hull, 1]
        tidx = tri.edge_tris[hull, 0]
        zi = pts[i]
        zj = pts[j]
        # apex = the triangle vertex not on the edge (index sum trick)
        apex = tri.simplices[tidx].sum(axis=1) - i - j
        za = pts[apex]
        ex = zj[:, 0] - zi[:, 0]
        ey = zj[:, 1] - zi[:, 1]
        d = np.stack([-ey, ex], axis=1)     # +90 degrees: left of the edge
        lft = ex * (za[:, 1] - zi[:, 1])
        rgt = ey * (za[:, 0] - zi[:, 0])
        sa = lft - rgt
        amb = np.abs(sa) <= predicates.CCW_BOUND * (np.abs(lft) + np.abs(rgt))
        for r in np.flatnonzero(amb):
            sa[r] = predicates.orient2d(zi[r, 0], zi[r, 1], zj[r, 0], zj[r, 1],
                                        za[r, 0], za[r, 1])
        d[sa > 0] *= -1.0                    # point away from the apex

        origin = cc[tidx]
        t0 = np.zeros(len(hull))
        t1 = np.full(len(hull), np.inf)
        alive = np.ones(len(hull), dtype=bool)
        for o, dd, blo, bhi in ((origin[:, 0], d[:, 0], bbox.x0, bbox.x1),
                                (origin[:, 1], d[:, 1], bbox.y0, bbox.y1)):
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (blo - o) / dd
                tb = (bhi - o) / dd
            lo = np.minimum(ta, tb)
            hi = np.maximum(ta, tb)
            para = dd == 0
            okpara = (o >= blo) & (o <= bhi)
            t0 = np.where(para, t0, np.maximum(t0, lo))
            t1 = np.where(para, t1, np.minimum(t1, hi))
            alive &= ~para | okpara
        ok = alive & (t1 >= t0) & (t1 >= 0.0) & np.isfinite(t1)
        texit = np.where(ok, t1, 0.0)
        p1[hull] = origin + texit[:, None] * d
        valid[hull] = ok
    tri.facet_p0, tri.facet_p1, tri.facet_valid = p0, p1, valid


def _edges_from_simplices(simplices, neighbors):
    m = len(simplices)
    rows_t, rows_k = np.divmod(np.arange(3 * m), 3)
    nb = neighbors[rows_t, rows_k]
    keep = (nb < rows_t)
    i = simplices[rows_t[keep], (rows_k[keep] + 1) % 3]
    j = simplices[rows_t[keep], (rows_k[keep] + 2) % 3]
    edges = np.stack([i, j], axis=1).astype(np.int32)
    edge_tris = np.stack([rows_t[keep], nb[keep]], axis=1).astype(np.int32)
    return edges, edge_tris


def _vnv_from_edges(n, edges):
    if len(edges) == 0:
        return np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int32)
    directed_src = np.concatenate([edges[:, 0], edges[:, 1]])
    directed_dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.argsort(directed_src, kind="stable")
    indices = directed_dst[order].astype(np.int32)
    counts = np.bincount(directed_src, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, indices


def delaunay(sample, bbox: Rect | None = None, trusted: bool = False) -> Triangulation:
    """Build the exact Delaunay triangulation of a PointSample (or (n,2) array).

    Cocircular degeneracies are resolved deterministically: the kept
    diagonal of a cocircular quad is the one containing the lowest site
    index.  Collinear inputs produce a degenerate (slab) structure.
    Duplicate sites raise ValueError.  `trusted` skips the duplicate scan
    (continuous samples are almost surely duplicate-free).
    """
    if isinstance(sample, PointSample):
        points = np.asarray(sample.sites, dtype=np.float64)
        if bbox is None and sample.windows:
            bbox = Rect(min(w.x0 for w in sample.windows),
                        min(w.y0 for w in sample.windows),
                        max(w.x1 for w in sample.windows),
                        max(w.y1 for w in sample.windows)).dilate(1.0)
    else:
        points = np.ascontiguousarray(np.asarray(sample, dtype=np.float64))
    if points.ndim != 2 or (len(points) and points.shape[1] != 2):
        raise ValueError("sites must be an (n, 2) array")
    if not np.all(np.isfinite(points)):
        raise ValueError("non-finite site coordinates")
    if bbox is None:
        if len(points) == 0:
            bbox = Rect(0.0, 0.0, 1.0, 1.0)
        else:
            bbox = Rect(points[:, 0].min(), points[:, 1].min(),
                        points[:, 0].max(), points[:, 1].max()).dilate(1.0)
    if not trusted:
        _check_duplicates(points)

    tri = Triangulation(points, bbox)
    n = len(points)

    if n < 3 or (not trusted and _all_collinear(points)):
        tri.degenerate = True
        if n >= 2:
            # order along the dominant direction of the configuration
            span = points.max(axis=0) - points.min(axis=0)
            axis = 0 if span[0] >= span[1] else 1
            order = np.lexsort((points[:, 1 - axis], points[:, axis]))
            tri.edges = np.stack([order[:-1], order[1:]], axis=1).astype(np.int32)
        tri.vnv = _vnv_from_edges(n, tri.edges)
        _build_facets(tri)
        return tri

    try:
        qh = spatial.Delaunay(points)
    except spatial.QhullError:
        if _all_collinear(points):
            return delaunay(points, bbox=bbox)   # degenerate slab path
        raise
    simplices = qh.simplices.astype(np.int32)
    neighbors = qh.neighbors.astype(np.int32)

    flip = _orient_ccw(points, simplices)
    if flip.any():
        simplices[flip] = simplices[flip][:, [0, 2, 1]]
        neighbors[flip] = neighbors[flip][:, [0, 2, 1]]

    simplices, neighbors, quads, changed = _repair(points, simplices, neighbors)

    tri.simplices = simplices
    tri.neighbors = neighbors
    tri.circumcenters, tri.circumradius2 = _circumcenters(points, simplices)
    tri.edges, tri.edge_tris = _edges_from_simplices(simplices, neighbors)
    if changed:
        tri.vnv = _vnv_from_edges(n, tri.edges)
    else:
        indptr, indices = qh.vertex_neighbor_vertices
        tri.vnv = (indptr.astype(np.int64), indices.astype(np.int32))
    tri.coincident_groups = _coincident_groups(points, simplices, quads)
    _build_facets(tri)
    return tri


# ---------------------------------------------------------------------------
# queries


def nearest_site(obj, query) -> tuple[int, float]:
    """Index and distance of the nearest site; exact ties go to the lowest index."""
    points = obj.points if isinstance(obj, Triangulation) else (
        obj.sites if isinstance(obj, PointSample) else np.asarray(obj))
    if len(points) == 0:
        raise ValueError("nearest_site on an empty sample")
    q = np.asarray(query, dtype=np.float64)
    d2 = (points[:, 0] - q[0]) ** 2 + (points[:, 1] - q[1]) ** 2
    m = d2.min()
    cand = np.flatnonzero(d2 <= m * (1.0 + 1e-12) + 1e-300)
    if len(cand) == 1:
        i = int(cand[0])
        return i, math.sqrt(d2[i])
    qx, qy = Fraction(float(q[0])), Fraction(float(q[1]))
    best, best_d2 = None, None
    for i in sorted(int(c) for c in cand):
        ex = Fraction(float(points[i, 0])) - qx
        ey = Fraction(float(points[i, 1])) - qy
        dd = ex * ex + ey * ey
        if best_d2 is None or dd < best_d2:
            best, best_d2 = i, dd
    return best, math.sqrt(float(best_d2))


def nearest_site_ties(obj, query) -> list[int]:
    """All sites at exactly minimal distance from the query (closed cells)."""
    points = obj.points if isinstance(obj, Triangulation) else (
        obj.sites if isinstance(obj, PointSample) else np.asarray(obj))
    if len(points) == 0:
        return []
    q = np.asarray(query, dtype=np.float64)
    d2 = (points[:, 0] - q[0]) ** 2 + (points[:, 1] - q[1]) ** 2
    m = d2.min()
    cand = np.flatnonzero(d2 <= m * (1.0 + 1e-12) + 1e-300)
    if len(cand) == 1:
        return [int(cand[0])]
    qx, qy = Fraction(float(q[0])), Fraction(float(q[1]))
    exact = {}
    for i in cand:
        ex = Fraction(float(points[i, 0])) - qx
        ey = Fraction(float(points[i, 1])) - qy
        exact[int(i)] = ex * ex + ey * ey
    mn = min(exact.values())
    return sorted(i for i, v in exact.items() if v == mn)


def _facet_deltas(tri: Triangulation):
    cached = getattr(tri, "_fdelta", None)
    if cached is None:
        cached = tri.facet_p1 - tri.facet_p0
        tri._fdelta = cached
    return cached


def _facet_aabbs(tri: Triangulation):
    """Cached per-facet bounding boxes (fx0, fy0, fx1, fy1)."""
    cached = getattr(tri, "_faabb", None)
    if cached is None:
        cached = (np.minimum(tri.facet_p0[:, 0], tri.facet_p1[:, 0]),
                  np.minimum(tri.facet_p0[:, 1], tri.facet_p1[:, 1]),
                  np.maximum(tri.facet_p0[:, 0], tri.facet_p1[:, 0]),
                  np.maximum(tri.facet_p0[:, 1], tri.facet_p1[:, 1]))
        tri._faabb = cached
    return cached


def _facet_candidates(tri: Triangulation, x0, y0, x1, y1) -> np.ndarray:
    """Indices of valid facets whose bounding box meets [x0,x1] x [y0,y1]
    (a sound superset of the facets meeting any shape inside that box)."""
    fx0, fy0, fx1, fy1 = _facet_aabbs(tri)
    return np.flatnonzero(tri.facet_valid & (fx1 >= x0) & (fx0 <= x1)
                          & (fy1 >= y0) & (fy0 <= y1))


def _segment_cross_params(p0, d, seg0, seg1):
    """Intersection parameter arrays for facet segments against one segment.

    Facets are (p0[i], p0[i]+d[i]); the query segment is seg0->seg1.
    Returns (t_facet, u_seg, hit_mask); endpoint touches count as hits.
    """
    e = np.asarray(seg1, dtype=float) - np.asarray(seg0, dtype=float)
    b0 = np.asarray(seg0, dtype=float)
    denom = d[:, 0] * e[1] - d[:, 1] * e[0]
    rx = b0[0] - p0[:, 0]
    ry = b0[1] - p0[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rx * e[1] - ry * e[0]) / denom
        u = (rx * d[:, 1] - ry * d[:, 0]) / denom
    hit = (np.abs(denom) > 0) & (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
    return t, u, hit


def _max_nd_from_candidates(tri: Triangulation, cc_mask, segments, corners) -> float:
    pts = tri.points
    corners = np.asarray(corners, dtype=float)
    d2 = ((pts[:, 0, None] - corners[None, :, 0]) ** 2
          + (pts[:, 1, None] - corners[None, :, 1]) ** 2)
    best = float(np.sqrt(d2.min(axis=0).max()))
    if cc_mask is not None and cc_mask.any():
        best = max(best, float(np.sqrt(tri.circumradius2[cc_mask].max())))
    if len(tri.edges):
        deltas = _facet_deltas(tri)
        for seg in segments:
            sx0 = min(seg.p0[0], seg.p1[0])
            sy0 = min(seg.p0[1], seg.p1[1])
            sx1 = max(seg.p0[0], seg.p1[0])
            sy1 = max(seg.p0[1], seg.p1[1])
            cand = _facet_candidates(tri, sx0, sy0, sx1, sy1)
            if not len(cand):
                continue
            p0 = tri.facet_p0[cand]
            d = deltas[cand]
            sites = tri.points[tri.edges[cand, 0]]
            t, _, hit = _segment_cross_params(p0, d, seg.p0, seg.p1)
            if hit.any():
                q = p0[hit] + t[hit, None] * d[hit]
                dd = (q[:, 0] - sites[hit, 0]) ** 2 + (q[:, 1] - sites[hit, 1]) ** 2
                best = max(best, float(np.sqrt(dd.max())))
    return best


def _point_in_region_masks(region: Region, pts: np.ndarray) -> np.ndarray:
    if isinstance(region, Rect):
        return ((pts[:, 0] >= region.x0) & (pts[:, 0] <= region.x1)
                & (pts[:, 1] >= region.y0) & (pts[:, 1] <= region.y1))
    band = np.maximum(np.abs(pts[:, 0] - region.cx), np.abs(pts[:, 1] - region.cy))
    return (band >= region.a) & (band <= region.b)


def max_nearest_distance_upper(tri: Triangulation, region: Region) -> float | None:
    """Cheap upper bound for max_nearest_distance, or None when unavailable.

    Any point's nearest-site distance is at most the circumradius of its
    Delaunay triangle, and along a facet the distance to the facet's sites
    is convex, so crossings of the region boundary are bounded by the two
    incident circumradii.  Region corners are evaluated exactly.
    """
    if tri.degenerate or len(tri.circumcenters) == 0:
        return None
    cc = tri.circumcenters
    r2 = tri.circumradius2
    best2 = 0.0
    in_cc = _point_in_region_masks(region, cc)
    if in_cc.any():
        best2 = float(r2[in_cc].max())

    # facets possibly crossing the region boundary
    p0, p1, valid = tri.facet_p0, tri.facet_p1, tri.facet_valid
    in0 = _point_in_region_masks(region, p0)
    in1 = _point_in_region_masks(region, p1)
    if isinstance(region, Rect):
        bx0, by0, bx1, by1 = region.x0, region.y0, region.x1, region.y1
    else:
        out = region.outer
        bx0, by0, bx1, by1 = out.x0, out.y0, out.x1, out.y1
    overlap = ~((np.maximum(p0[:, 0], p1[:, 0]) < bx0)
                | (np.minimum(p0[:, 0], p1[:, 0]) > bx1)
                | (np.maximum(p0[:, 1], p1[:, 1]) < by0)
                | (np.minimum(p0[:, 1], p1[:, 1]) > by1))
    if isinstance(region, SquareAnnulus):
        h = region.hole
        hole0 = ((p0[:, 0] > h.x0) & (p0[:, 0] < h.x1)
                 & (p0[:, 1] > h.y0) & (p0[:, 1] < h.y1))
        hole1 = ((p1[:, 0] > h.x0) & (p1[:, 0] < h.x1)
                 & (p1[:, 1] > h.y0) & (p1[:, 1] < h.y1))
        overlap &= ~(hole0 & hole1)
    cand = valid & overlap & ~(in0 & in1)
    if cand.any():
        t2 = tri.edge_tris[cand]
        if (t2[:, 1] < 0).any():
            return None        # hull ray crossing: unbounded along the ray
        vals2 = np.maximum(r2[t2[:, 0]], r2[t2[:, 1]])
        best2 = max(best2, float(vals2.max()))

    if isinstance(region, Rect):
        corners = region.corners()
    else:
        corners = np.concatenate([region.outer.corners(), region.hole.corners()])
    pts = tri.points
    d2 = ((pts[:, 0, None] - corners[None, :, 0]) ** 2
          + (pts[:, 1, None] - corners[None, :, 1]) ** 2)
    best2 = max(best2, float(d2.min(axis=0).max()))
    return math.sqrt(best2)


def max_nearest_distance(sample, region: Region, tri: Triangulation | None = None) -> float:
    """Exact max over the region of the distance to the nearest site.

    The nearest-site distance is convex on each clipped cell, so its
    maximum is attained at a clipped-cell vertex: a Voronoi vertex inside
    the region, a facet crossing of the region boundary, or a region
    corner.  These are enumerated exactly (vectorized).
    """
    if isinstance(sample, PointSample):
        if sample.n == 0:
            raise ValueError("max_nearest_distance on an empty sample")
        if not region_covered(region, sample.windows):
            raise ValueError("region escapes the sampled territory")
        if tri is None:
            tri = delaunay(sample)
    else:
        if tri is None:
            tri = delaunay(np.asarray(sample))
        if tri.n == 0:
            raise ValueError("max_nearest_distance on an empty sample")

    cc = tri.circumcenters
    has_cc = not tri.degenerate and len(cc) > 0
    if isinstance(region, Rect):
        cc_mask = None
        if has_cc:
            cc_mask = ((cc[:, 0] >= region.x0) & (cc[:, 0] <= region.x1)
                       & (cc[:, 1] >= region.y0) & (cc[:, 1] <= region.y1))
        segments = list(region.sides().values())
        corners = region.corners()
    else:
        cc_mask = None
        if has_cc:
            band = np.maximum(np.abs(cc[:, 0] - region.cx), np.abs(cc[:, 1] - region.cy))
            cc_mask = (band >= region.a) & (band <= region.b)
        segments = (list(region.outer_sides().values())
                    + list(region.inner_sides().values()))
        corners = np.concatenate([region.outer.corners(), region.hole.corners()])
    return _max_nd_from_candidates(tri, cc_mask, segments, corners)


def determinism_certificate(sample: PointSample, window: Region,
                            tri: Triangulation | None = None) -> bool:
    """True iff every event measurable in the window is invariant under any
    extension of the sample outside its sampled territory.

    Criterion: the largest nearest-site distance met inside the window does
    not exceed the distance from the window to unsampled ground, so the
    color of every window point is decided by sampled sites.
    """
    if not region_covered(window, sample.windows):
        raise ValueError("window escapes the sampled territory")
    if sample.n == 0:
        return False
    margin = distance_to_unsampled(window, sample.windows)
    if margin <= 0:
        return False
    if tri is not None:
        ub = max_nearest_distance_upper(tri, window)
        if ub is not None and ub <= margin:
            return True
    return max_nearest_distance(sample, window, tri=tri) <= margin


# ---------------------------------------------------------------------------
# cell views (diagnostics / invariant tests)


@dataclass(frozen=True)
class VoronoiCellView:
    """Facet list of one Voronoi cell (rays clipped to the triangulation bbox)."""

    site: int
    facets: tuple[tuple[int, tuple[float, float], tuple[float, float]], ...]


def cell_view(tri: Triangulation, site: int) -> VoronoiCellView:
    mask = (tri.edges[:, 0] == site) | (tri.edges[:, 1] == site)
    out = []
    for e in np.flatnonzero(mask):
        if not tri.facet_valid[e]:
            continue
        i, j = tri.edges[e]
        other = int(j if i == site else i)
        out.append((other, tuple(tri.facet_p0[e]), tuple(tri.facet_p1[e])))
    return VoronoiCellView(site=int(site), facets=tuple(out))
