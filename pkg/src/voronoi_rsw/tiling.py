"""Site coloring and exact connectivity of colored cells clipped to a region.

Cells are closed, so a point on a facet between differently colored cells
is both black and white.  Connectivity inside a query region is encoded as
a graph: one node per (cell, convex piece of the region), an edge whenever
the shared Voronoi facet meets the piece.  Rectangles are a single convex
piece; square annuli are covered by four overlapping strips, with pieces of
the same cell linked through the strip overlaps.  This makes graph
connectivity equal to the topological connectivity of (color set) ∩ region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _sp_components

from . import predicates
from .geom import (
    PointSample,
    Rect,
    Region,
    Segment,
    SquareAnnulus,
    Triangulation,
    delaunay,
    determinism_certificate,
    nearest_site_ties,
    region_rects,
    subtract_union,
)
from .streams import as_stream

__all__ = [
    "ColoredTiling",
    "ClippedGraph",
    "GraphCache",
    "UncertifiedRegionError",
    "color_sites",
    "clipped_graph",
    "connected",
    "cells_touching_segment",
    "cells_touching_rect",
]

BLACK = "black"
WHITE = "white"

_AMBIG = 1e-9


class UncertifiedRegionError(RuntimeError):
    """Raised when an event is requested on a region whose decisions could
    still depend on unsampled sites."""


# ---------------------------------------------------------------------------
# coloring


@dataclass(frozen=True)
class ColoredTiling:
    """Immutable colored Voronoi tiling; the single source of truth per trial."""

    sample: PointSample
    tri: Triangulation
    colors: np.ndarray               # bool per site, True = black
    p: float
    color_stream_id: str
    certified: tuple[Region, ...] = ()

    def __post_init__(self):
        self.colors.setflags(write=False)

    @property
    def n(self) -> int:
        return self.tri.n

    def color_mask(self, color: str) -> np.ndarray:
        if color == BLACK:
            return self.colors
        if color == WHITE:
            return ~self.colors
        raise ValueError(f"color must be 'black' or 'white', got {color!r}")

    def with_certified(self, regions) -> "ColoredTiling":
        return ColoredTiling(self.sample, self.tri, self.colors, self.p,
                             self.color_stream_id,
                             self.certified + tuple(regions))


def color_sites(sample: PointSample, p: float, stream,
                tri: Triangulation | None = None) -> ColoredTiling:
    """Color each site black with probability p, independently.

    The coloring uses one uniform per site in site order, so with a shared
    stream the black set at p is contained in the black set at p' >= p
    (monotone coupling).
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must lie in [0, 1], got {p}")
    stream = as_stream(stream)
    u = stream.gen.uniform(size=sample.n)
    colors = u < p
    if tri is None:
        tri = delaunay(sample)
    return ColoredTiling(sample=sample, tri=tri, colors=colors, p=p,
                         color_stream_id=stream.id)


# ---------------------------------------------------------------------------
# cell/region contact tests


def _exact_touch_recheck(tri: Triangulation, touch: np.ndarray, sites, p0, p1):
    indptr, indices = tri.vnv
    for i in sites:
        nb_pts = tri.points[indices[indptr[i]:indptr[i + 1]]]
        res = predicates.cell_segment_interval_exact(tri.points[i], nb_pts, p0, p1)
        touch[i] = res is not None


from .geom import _facet_candidates, _facet_deltas  # shared facet caches


def cells_touching_segments(tri: Triangulation, segs) -> np.ndarray:
    """(K, n) bool: closed cell meets closed segment, for a batch of segments.

    The interval of cell ∩ segment ends either at a facet crossing or at a
    segment endpoint, so the touching cells are exactly the cells of
    crossing facets plus the closed-cell owners of the two endpoints.
    Marginal rows fall back to exact arithmetic per site.  Point segments
    (p0 == p1) mean closed-cell membership of the point.
    """
    K = len(segs)
    n = tri.n
    touch = np.zeros((K, n), dtype=bool)
    if n == 0 or K == 0:
        return touch
    pts0 = np.array([s.p0 for s in segs], dtype=float)
    pts1 = np.array([s.p1 for s in segs], dtype=float)
    for k in range(K):
        for i in nearest_site_ties(tri, pts0[k]):
            touch[k, i] = True
        if tuple(pts0[k]) != tuple(pts1[k]):
            for i in nearest_site_ties(tri, pts1[k]):
                touch[k, i] = True
    live = [k for k in range(K) if tuple(pts0[k]) != tuple(pts1[k])]
    if not live or not len(tri.edges):
        return touch

    f0 = tri.facet_p0
    d = _facet_deltas(tri)
    eps = _AMBIG
    for k in live:
        cand = _facet_candidates(
            tri,
            min(pts0[k, 0], pts1[k, 0]) - eps, min(pts0[k, 1], pts1[k, 1]) - eps,
            max(pts0[k, 0], pts1[k, 0]) + eps, max(pts0[k, 1], pts1[k, 1]) + eps)
        if not len(cand):
            continue
        d0 = d[cand, 0]
        d1 = d[cand, 1]
        ex = pts1[k, 0] - pts0[k, 0]
        ey = pts1[k, 1] - pts0[k, 1]
        rx = pts0[k, 0] - f0[cand, 0]
        ry = pts0[k, 1] - f0[cand, 1]
        denom = d0 * ey - d1 * ex
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (rx * ey - ry * ex) / denom
            u = (rx * d1 - ry * d0) / denom
        nz = denom != 0
        hit = nz & (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
        rows = cand[hit]
        touch[k, tri.edges[rows, 0]] = True
        touch[k, tri.edges[rows, 1]] = True

        scale = np.abs(d0 * ey) + np.abs(d1 * ex)
        near_par = np.abs(denom) <= 1e-12 * (scale + 1e-300)
        band = nz & (t >= -eps) & (t <= 1.0 + eps) & (u >= -eps) & (u <= 1.0 + eps)
        marginal = (band & ~hit) | (band & (
            (np.abs(t) <= eps) | (np.abs(t - 1.0) <= eps)
            | (np.abs(u) <= eps) | (np.abs(u - 1.0) <= eps))) | near_par
        if marginal.any():
            sites = np.unique(tri.edges[cand[marginal]].ravel())
            _exact_touch_recheck(tri, touch[k], sites,
                                 tuple(pts0[k]), tuple(pts1[k]))
    return touch


def cells_touching_segment(tri: Triangulation, p0, p1) -> np.ndarray:
    """Bool per site: does the closed Voronoi cell meet segment [p0, p1]?"""
    return cells_touching_segments(tri, [Segment(tuple(p0), tuple(p1))])[0]


def cells_touching_rect(tri: Triangulation, rect: Rect,
                        facet_hits: np.ndarray | None = None) -> np.ndarray:
    """Bool per site: does the closed cell meet the closed rectangle?

    A convex cell meets the rect iff its site lies inside, or one of its
    facets meets the rect, or the whole rect sits inside the cell (detected
    by closed-cell membership of one rect corner).
    """
    n = tri.n
    if n == 0:
        return np.zeros(0, dtype=bool)
    pts = tri.points
    touch = ((pts[:, 0] >= rect.x0) & (pts[:, 0] <= rect.x1)
             & (pts[:, 1] >= rect.y0) & (pts[:, 1] <= rect.y1))
    if len(tri.edges):
        if facet_hits is None:
            facet_hits = facets_hit_rect(tri, rect)
        touch[tri.edges[facet_hits, 0]] = True
        touch[tri.edges[facet_hits, 1]] = True
    for i in nearest_site_ties(tri, (rect.x0, rect.y0)):
        touch[i] = True
    return touch


# ---------------------------------------------------------------------------
# facet/region intersection


def _facet_window_rect_cand(tri: Triangulation, rect: Rect, cand: np.ndarray):
    """Liang-Barsky windows of candidate facets against a closed rect.

    Returns (t0, t1, feasible, ambiguous) over the candidate rows.
    """
    P0 = tri.facet_p0[cand]
    D = _facet_deltas(tri)[cand]
    m = len(cand)
    t0 = np.zeros(m)
    t1 = np.ones(m)
    alive = np.ones(m, dtype=bool)
    for q, d, blo, bhi in ((P0[:, 0], D[:, 0], rect.x0, rect.x1),
                           (P0[:, 1], D[:, 1], rect.y0, rect.y1)):
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (blo - q) / d
            tb = (bhi - q) / d
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        para = d == 0
        okpara = (q >= blo) & (q <= bhi)
        t0 = np.where(para, t0, np.maximum(t0, lo))
        t1 = np.where(para, t1, np.minimum(t1, hi))
        alive &= ~para | okpara
    feasible = alive & (t0 <= t1)
    ambiguous = alive & (np.abs(t1 - t0) <= _AMBIG)
    return t0, t1, feasible, ambiguous


def _facet_window_rect(tri: Triangulation, rect: Rect):
    """Per-facet Liang-Barsky window against a rect, over all E facets."""
    E = len(tri.edges)
    t0 = np.zeros(E)
    t1 = np.ones(E)
    feasible = np.zeros(E, dtype=bool)
    ambiguous = np.zeros(E, dtype=bool)
    if E == 0:
        return t0, t1, feasible, ambiguous
    cand = _facet_candidates(tri, rect.x0, rect.y0, rect.x1, rect.y1)
    if len(cand):
        ct0, ct1, cf, ca = _facet_window_rect_cand(tri, rect, cand)
        t0[cand] = ct0
        t1[cand] = ct1
        feasible[cand] = cf
        ambiguous[cand] = ca
    return t0, t1, feasible, ambiguous


def _facet_exact_endpoints(tri: Triangulation, e: int):
    """Exact parametric form of facet e: (origin, direction, kind).

    kind is 'segment' (t in [0,1]), 'ray' (t >= 0) or 'line' (t free).
    Origin/direction are Fraction pairs.
    """
    pts = tri.points
    if tri.degenerate:
        i, j = tri.edges[e]
        zi = (Fraction(float(pts[i, 0])), Fraction(float(pts[i, 1])))
        zj = (Fraction(float(pts[j, 0])), Fraction(float(pts[j, 1])))
        mid = ((zi[0] + zj[0]) / 2, (zi[1] + zj[1]) / 2)
        d = (-(zj[1] - zi[1]), zj[0] - zi[0])
        return mid, d, "line"
    ta, tb = tri.edge_tris[e]
    s = tri.simplices[ta]
    c0 = predicates.circumcenter_exact(pts[s[0]], pts[s[1]], pts[s[2]])
    if tb >= 0:
        s2 = tri.simplices[tb]
        c1 = predicates.circumcenter_exact(pts[s2[0]], pts[s2[1]], pts[s2[2]])
        return c0, (c1[0] - c0[0], c1[1] - c0[1]), "segment"
    # hull ray: perpendicular to the edge, oriented away from the apex
    i, j = tri.edges[e]
    apex = [v for v in tri.simplices[ta] if v != i and v != j][0]
    zi, zj, za = pts[i], pts[j], pts[apex]
    d = (Fraction(float(-(zj[1] - zi[1]))), Fraction(float(zj[0] - zi[0])))
    side = predicates.orient2d(*zi, *zj, *za)
    mid = ((Fraction(float(zi[0])) + Fraction(float(zj[0]))) / 2,
           (Fraction(float(zi[1])) + Fraction(float(zj[1]))) / 2)
    probe = predicates.orient2d_exact(
        float(zi[0]), float(zi[1]), float(zj[0]), float(zj[1]),
        float(mid[0] + d[0]), float(mid[1] + d[1]))
    if probe == side:
        d = (-d[0], -d[1])
    return c0, d, "ray"


def _exact_hits_rect(origin, direction, kind, rect) -> bool:
    lo = Fraction(0)
    hi = Fraction(1) if kind == "segment" else None
    if kind == "line":
        lo = None
    for q, d, blo, bhi in ((origin[0], direction[0], Fraction(rect.x0), Fraction(rect.x1)),
                           (origin[1], direction[1], Fraction(rect.y0), Fraction(rect.y1))):
        if d == 0:
            if q < blo or q > bhi:
                return False
            continue
        ta, tb = (blo - q) / d, (bhi - q) / d
        if ta > tb:
            ta, tb = tb, ta
        lo = ta if lo is None else max(lo, ta)
        hi = tb if hi is None else min(hi, tb)
        if lo is not None and hi is not None and lo > hi:
            return False
    return True


def _exact_clip_endpoints(origin, direction, kind, rect):
    """Exact clipped endpoints of the facet within the rect, or None."""
    lo = Fraction(0)
    hi = Fraction(1) if kind == "segment" else None
    if kind == "line":
        lo = None
    for q, d, blo, bhi in ((origin[0], direction[0], Fraction(rect.x0), Fraction(rect.x1)),
                           (origin[1], direction[1], Fraction(rect.y0), Fraction(rect.y1))):
        if d == 0:
            if q < blo or q > bhi:
                return None
            continue
        ta, tb = (blo - q) / d, (bhi - q) / d
        if ta > tb:
            ta, tb = tb, ta
        lo = ta if lo is None else max(lo, ta)
        hi = tb if hi is None else min(hi, tb)
        if lo is not None and hi is not None and lo > hi:
            return None
    if lo is None or hi is None:
        raise ValueError("unbounded facet within a bounded rect")
    q0 = (origin[0] + lo * direction[0], origin[1] + lo * direction[1])
    q1 = (origin[0] + hi * direction[0], origin[1] + hi * direction[1])
    return q0, q1


def facets_hit_rect(tri: Triangulation, rect: Rect) -> np.ndarray:
    E = len(tri.edges)
    hits = np.zeros(E, dtype=bool)
    if E == 0:
        return hits
    cand = _facet_candidates(tri, rect.x0, rect.y0, rect.x1, rect.y1)
    if not len(cand):
        return hits
    _, _, feasible, ambiguous = _facet_window_rect_cand(tri, rect, cand)
    hits[cand] = feasible
    for e in cand[ambiguous]:
        origin, direction, kind = _facet_exact_endpoints(tri, int(e))
        hits[e] = _exact_hits_rect(origin, direction, kind, rect)
    return hits


def facets_hit_rects(tri: Triangulation, rects) -> list[np.ndarray]:
    return [facets_hit_rect(tri, r) for r in rects]


def facets_hit_annulus(tri: Triangulation, ann: SquareAnnulus) -> np.ndarray:
    """facet ∩ closed annulus nonempty: meets the outer box and the clipped
    part is not contained in the open hole."""
    t0, t1, feasible, ambiguous = _facet_window_rect(tri, ann.outer)
    E = len(tri.edges)
    hits = np.zeros(E, dtype=bool)
    if E == 0:
        return hits
    P0, D = tri.facet_p0, tri.facet_p1 - tri.facet_p0
    q0 = P0 + t0[:, None] * D
    q1 = P0 + t1[:, None] * D
    hole = ann.hole
    in0 = ((q0[:, 0] > hole.x0) & (q0[:, 0] < hole.x1)
           & (q0[:, 1] > hole.y0) & (q0[:, 1] < hole.y1))
    in1 = ((q1[:, 0] > hole.x0) & (q1[:, 0] < hole.x1)
           & (q1[:, 1] > hole.y0) & (q1[:, 1] < hole.y1))
    hits = feasible & ~(in0 & in1)
    margin0 = np.minimum.reduce([np.abs(q0[:, 0] - hole.x0), np.abs(q0[:, 0] - hole.x1),
                                 np.abs(q0[:, 1] - hole.y0), np.abs(q0[:, 1] - hole.y1)])
    margin1 = np.minimum.reduce([np.abs(q1[:, 0] - hole.x0), np.abs(q1[:, 0] - hole.x1),
                                 np.abs(q1[:, 1] - hole.y0), np.abs(q1[:, 1] - hole.y1)])
    ambiguous = ambiguous | (feasible & (in0 | in1) & ((margin0 <= _AMBIG) | (margin1 <= _AMBIG)))
    for e in np.flatnonzero(ambiguous):
        origin, direction, kind = _facet_exact_endpoints(tri, int(e))
        clip = _exact_clip_endpoints(origin, direction, kind, ann.outer)
        if clip is None:
            hits[e] = False
            continue
        (x0, y0), (x1, y1) = clip
        hx0, hy0 = Fraction(hole.x0), Fraction(hole.y0)
        hx1, hy1 = Fraction(hole.x1), Fraction(hole.y1)
        inside0 = hx0 < x0 < hx1 and hy0 < y0 < hy1
        inside1 = hx0 < x1 < hx1 and hy0 < y1 < hy1
        hits[e] = not (inside0 and inside1)
    return hits


# ---------------------------------------------------------------------------
# clipped connectivity graph


@dataclass
class ClippedGraph:
    """Connectivity of one color's cells clipped to a region.

    nodes/edges are site-level views; component labels live on
    (site, strip-piece) pairs so that annulus pieces of a single cell that
    the hole separates are not merged.
    """

    region: Region
    color: str
    nodes: np.ndarray                       # sorted site indices
    edges: np.ndarray                       # (E, 2) site pairs
    contacts: dict[str, np.ndarray]         # label -> bool per piece
    piece_sites: np.ndarray                 # site index per piece
    piece_labels: np.ndarray                # component id per piece

    def contact_components(self, label: str) -> set[int]:
        mask = self.contacts[label]
        return set(np.unique(self.piece_labels[mask]).tolist())

    def node_contacts(self, label: str) -> np.ndarray:
        """Contact flags projected to the site-level nodes array."""
        flags = np.zeros(len(self.nodes), dtype=bool)
        pos = np.searchsorted(self.nodes, self.piece_sites[self.contacts[label]])
        flags[pos] = True
        return flags


def connected(graph: ClippedGraph, contacts_a: str, contacts_b: str) -> bool:
    """True iff one component touches both designated boundary sets."""
    if contacts_a not in graph.contacts or contacts_b not in graph.contacts:
        raise KeyError(f"unknown contact labels {contacts_a!r}/{contacts_b!r}")
    return bool(graph.contact_components(contacts_a)
                & graph.contact_components(contacts_b))


def touches_all(graph: ClippedGraph, labels) -> bool:
    sets = [graph.contact_components(lab) for lab in labels]
    out = set.intersection(*sets) if sets else set()
    return bool(out)


def _region_is_certified(tiling: ColoredTiling, region: Region) -> bool:
    for cert in tiling.certified:
        if not subtract_union(region_rects(region), region_rects(cert)):
            return True
    return False


def _ensure_certified(tiling: ColoredTiling, region: Region):
    if _region_is_certified(tiling, region):
        return
    if tiling.n and determinism_certificate(tiling.sample, region, tri=tiling.tri):
        return
    raise UncertifiedRegionError(
        f"region {region} is not covered by a determinism certificate; "
        "sample wider margins or extend by shells")


def _group_vertex_in_rect(tri: Triangulation, group: np.ndarray, rect: Rect) -> bool:
    cx, cy = predicates.circumcenter_exact(*tri.points[group[:3]])
    return (Fraction(rect.x0) <= cx <= Fraction(rect.x1)
            and Fraction(rect.y0) <= cy <= Fraction(rect.y1))


def _touch_key(obj):
    if isinstance(obj, Segment):
        return ("seg", obj.p0, obj.p1)
    if isinstance(obj, Rect):
        return ("rect", obj.x0, obj.y0, obj.x1, obj.y1)
    raise TypeError(f"contact must be Segment or Rect, got {type(obj)!r}")


def _make_toucher(tri: Triangulation, memo: dict):
    """Memoized closed-cell touch masks (and facet hits) for segments/rects.

    Uncached queries are computed in vectorized batches.
    """

    def facet_hits_many(rects) -> list[np.ndarray]:
        missing = [r for r in rects
                   if ("fhit",) + _touch_key(r)[1:] not in memo]
        if missing:
            for r, mask in zip(missing, facets_hit_rects(tri, missing)):
                memo[("fhit",) + _touch_key(r)[1:]] = mask
        return [memo[("fhit",) + _touch_key(r)[1:]] for r in rects]

    def seg_many(segs) -> list[np.ndarray]:
        missing = [s for s in segs if _touch_key(s) not in memo]
        if missing:
            masks = cells_touching_segments(tri, missing)
            for s, mask in zip(missing, masks):
                memo[_touch_key(s)] = mask
        return [memo[_touch_key(s)] for s in segs]

    def rect_many(rects) -> list[np.ndarray]:
        missing = [r for r in rects if _touch_key(r) not in memo]
        if missing:
            for r, fh in zip(missing, facet_hits_many(missing)):
                memo[_touch_key(r)] = cells_touching_rect(tri, r, facet_hits=fh)
        return [memo[_touch_key(r)] for r in rects]

    def touch(obj) -> np.ndarray:
        if isinstance(obj, Segment):
            return seg_many([obj])[0]
        return rect_many([obj])[0]

    touch.facet_hits = lambda rect: facet_hits_many([rect])[0]
    touch.facet_hits_many = facet_hits_many
    touch.seg_many = seg_many
    touch.rect_many = rect_many
    return touch


def clipped_graph(tiling: ColoredTiling, region: Region, color: str,
                  extra_contacts: dict | None = None,
                  check_certificate: bool = True,
                  _touch_memo: dict | None = None) -> ClippedGraph:
    """Build the exact clipped connectivity graph of one color in a region.

    extra_contacts maps label -> Segment or Rect; only rectangle regions
    accept extras (all events needing them live on rectangles).
    """
    if check_certificate:
        _ensure_certified(tiling, region)
    tri = tiling.tri
    n = tri.n
    colmask = tiling.color_mask(color)
    extra_contacts = extra_contacts or {}
    if extra_contacts and not isinstance(region, Rect):
        raise ValueError("extra contacts are only supported on Rect regions")

    touch = _make_toucher(tri, _touch_memo if _touch_memo is not None else {})

    strips = [region] if isinstance(region, Rect) else region.strips()
    ns = len(strips)

    overlaps = []
    if ns > 1:
        for k1 in range(ns):
            for k2 in range(k1 + 1, ns):
                s1, s2 = strips[k1], strips[k2]
                ox0, oy0 = max(s1.x0, s2.x0), max(s1.y0, s2.y0)
                ox1, oy1 = min(s1.x1, s2.x1), min(s1.y1, s2.y1)
                if ox0 <= ox1 and oy0 <= oy1:
                    overlaps.append((k1, k2, Rect(ox0, oy0, ox1, oy1)))

    # prefetch all masks in vectorized batches
    touch.rect_many(list(strips) + [ov[2] for ov in overlaps])
    if isinstance(region, Rect):
        touch.seg_many(list(region.sides().values()))
    else:
        touch.seg_many(list(region.inner_sides().values())
                       + list(region.outer_sides().values()))

    member = np.zeros((ns, n), dtype=bool)
    for k, strip in enumerate(strips):
        member[k] = touch(strip) & colmask

    # intra-strip edges: same color on both ends, facet meets the strip
    piece = lambda k, sites: k * n + sites
    edge_src = []
    edge_dst = []
    any_hit = np.zeros(len(tri.edges), dtype=bool)
    if len(tri.edges):
        ecol = colmask[tri.edges[:, 0]] & colmask[tri.edges[:, 1]]
        for k, strip in enumerate(strips):
            ehit = ecol & touch.facet_hits(strip)
            any_hit |= ehit
            if ehit.any():
                edge_src.append(piece(k, tri.edges[ehit, 0]))
                edge_dst.append(piece(k, tri.edges[ehit, 1]))

    # cells meeting only at an exactly degenerate Voronoi vertex: closed
    # cells share that point, so all pairs at the vertex connect
    for group in tri.coincident_groups:
        gcol = group[colmask[group]]
        if len(gcol) < 2:
            continue
        for k, strip in enumerate(strips):
            if _group_vertex_in_rect(tri, group, strip):
                ii, jj = np.triu_indices(len(gcol), k=1)
                edge_src.append(piece(k, gcol[ii]))
                edge_dst.append(piece(k, gcol[jj]))

    # inter-strip edges: a cell meeting the overlap of two strips links its pieces
    for k1, k2, overlap in overlaps:
        both = touch(overlap) & colmask
        sites = np.flatnonzero(both)
        if len(sites):
            edge_src.append(piece(k1, sites))
            edge_dst.append(piece(k2, sites))

    active = member.ravel()
    n_pieces = ns * n
    if edge_src:
        src = np.concatenate(edge_src)
        dst = np.concatenate(edge_dst)
        data = np.ones(len(src), dtype=np.int8)
        m = csr_matrix((data, (src, dst)), shape=(n_pieces, n_pieces))
        _, labels_all = _sp_components(m, directed=False)
    else:
        labels_all = np.arange(n_pieces)

    piece_idx = np.flatnonzero(active)
    piece_sites = (piece_idx % n).astype(np.int64)
    piece_strip = piece_idx // n
    piece_labels = labels_all[piece_idx]

    contacts: dict[str, np.ndarray] = {}

    def seg_contact_mask(seg: Segment, strip_k: int | None = None) -> np.ndarray:
        hit = touch(seg) & colmask
        mask = hit[piece_sites]
        if strip_k is not None:
            mask &= piece_strip == strip_k
        return mask

    if isinstance(region, Rect):
        for name, seg in region.sides().items():
            contacts[name] = seg_contact_mask(seg)
        for name, obj in extra_contacts.items():
            contacts[name] = (touch(obj) & colmask)[piece_sites]
    else:
        inner = np.zeros(len(piece_idx), dtype=bool)
        outer = np.zeros(len(piece_idx), dtype=bool)
        strip_names = ("left", "right", "bottom", "top")
        inner_sides = region.inner_sides()
        outer_sides = region.outer_sides()
        for k, name in enumerate(strip_names):
            inner |= seg_contact_mask(inner_sides[name], strip_k=k)
            outer |= seg_contact_mask(outer_sides[name], strip_k=k)
        contacts["inner"] = inner
        contacts["outer"] = outer

    nodes = np.unique(piece_sites)
    site_edges = tri.edges[any_hit] if len(tri.edges) else np.empty((0, 2), dtype=np.int32)

    return ClippedGraph(region=region, color=color, nodes=nodes,
                        edges=site_edges, contacts=contacts,
                        piece_sites=piece_sites, piece_labels=piece_labels)


# ---------------------------------------------------------------------------
# per-trial cache: one graph per (region, color), shared across events


class GraphCache:
    """Memoizes clipped graphs and contact queries for one tiling.

    Events sharing a (region, color) pair reuse one connectivity graph and
    issue as many contact queries as they need; cell/segment touch masks are
    color-independent and shared too.
    """

    def __init__(self, tiling: ColoredTiling):
        self.tiling = tiling
        self._graphs: dict = {}
        self._touch_memo: dict = {}
        self._toucher = _make_toucher(tiling.tri, self._touch_memo)

    def graph(self, region: Region, color: str) -> ClippedGraph:
        key = (region, color)
        g = self._graphs.get(key)
        if g is None:
            g = clipped_graph(self.tiling, region, color,
                              _touch_memo=self._touch_memo)
            self._graphs[key] = g
        return g

    def components_touching(self, graph: ClippedGraph, obj) -> set[int]:
        """Component ids of `graph` whose cells meet a Segment or Rect.

        Only valid for contacts inside the graph's region (used on Rect
        regions, where every cell piece is the full clipped cell).
        """
        if not isinstance(graph.region, Rect):
            raise ValueError("on-demand contacts are only supported on Rect regions")
        hit = self._toucher(obj) & self.tiling.color_mask(graph.color)
        mask = hit[graph.piece_sites]
        return set(np.unique(graph.piece_labels[mask]).tolist())
