"""Slow independent reference implementations, used only by tests.

Nothing here shares code with the production geometry/connectivity path:
cells are built by direct half-plane clipping, region connectivity runs on
shapely geometry, and crossing/circuit decisions are re-derived on a raster
of nearest-site colors.  Raster decisions are excused near color interfaces
(clearance below 2*sqrt(2)*h), where pixel connectivity is unreliable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from shapely.geometry import (
    GeometryCollection,
    LineString,
    MultiPolygon,
    Point,
    Polygon,
    box,
)
from shapely.strtree import STRtree

from .geom import PointSample, Rect, SquareAnnulus
from .tiling import ColoredTiling

__all__ = [
    "NaiveVoronoi",
    "RasterField",
    "naive_voronoi",
    "naive_components",
    "naive_connected",
    "naive_touches_all",
    "region_geometry",
    "raster_field",
    "raster_connectivity",
    "raster_circuit",
]

_TINY = 1e-9


# ---------------------------------------------------------------------------
# naive Voronoi by half-plane clipping


@dataclass
class NaiveVoronoi:
    """Cells as explicit polygons clipped to a generous working box."""

    sites: np.ndarray
    cells: list                       # shapely Polygon per site
    adjacency: set                    # frozenset pairs with a positive facet
    point_contact_groups: list        # site groups meeting at a single point
    workbox: Rect


def _clip_halfplane(poly, tags, a, b, c, tag):
    """Clip a tagged polygon by a*x + b*y <= c (Sutherland-Hodgman).

    tags[k] names the bisector that carries the edge poly[k] -> poly[k+1]
    (None for working-box edges); the new clip edge is tagged `tag`.
    """
    out = []
    out_tags = []
    m = len(poly)
    for k in range(m):
        px, py = poly[k]
        qx, qy = poly[(k + 1) % m]
        pin = a * px + b * py <= c
        qin = a * qx + b * qy <= c
        if pin:
            out.append((px, py))
            out_tags.append(tags[k])
        if pin != qin:
            fp = a * px + b * py - c
            fq = a * qx + b * qy - c
            t = fp / (fp - fq)
            x = (px + t * (qx - px), py + t * (qy - py))
            out.append(x)
            # leaving: the new edge runs along the clip line; entering: the
            # remainder of the original edge continues toward q
            out_tags.append(tag if pin else tags[k])
    return out, out_tags


def _circumcenter_exact(pts, i, j, k):
    """Exact circumcenter of three sites as Fractions, or None if collinear."""
    ax, ay = Fraction(float(pts[i, 0])), Fraction(float(pts[i, 1]))
    bx, by = Fraction(float(pts[j, 0])) - ax, Fraction(float(pts[j, 1])) - ay
    cx, cy = Fraction(float(pts[k, 0])) - ax, Fraction(float(pts[k, 1])) - ay
    d = 2 * (bx * cy - by * cx)
    if d == 0:
        return None
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    return (ax + (cy * b2 - by * c2) / d, ay + (bx * c2 - cx * b2) / d)


def _bisector_interval_exact(pts, i, j, others):
    """Exact parameter interval of the (i, j) Voronoi facet on the bisector.

    The bisector is parametrized as mid + t*perp; each other site k imposes
    a half-line constraint.  Returns (lo, hi) Fractions with lo <= hi, or
    None when empty (lo/hi of None mean unbounded).
    """
    xi, yi = Fraction(float(pts[i, 0])), Fraction(float(pts[i, 1]))
    xj, yj = Fraction(float(pts[j, 0])), Fraction(float(pts[j, 1]))
    mx, my = (xi + xj) / 2, (yi + yj) / 2
    dx, dy = -(yj - yi), xj - xi
    lo, hi = None, None
    for k in others:
        if k == i or k == j:
            continue
        xk, yk = Fraction(float(pts[k, 0])), Fraction(float(pts[k, 1]))
        # |q - zi|^2 <= |q - zk|^2 with q = mid + t d:  A - B t <= 0
        ex, ey = xi - xk, yi - yk
        a = ex * (xi + xk - 2 * mx) + ey * (yi + yk - 2 * my)
        bcoef = 2 * (ex * dx + ey * dy)
        if bcoef == 0:
            if a > 0:
                return None
            continue
        t = a / bcoef
        if bcoef > 0:
            lo = t if lo is None else max(lo, t)
        else:
            hi = t if hi is None else min(hi, t)
        if lo is not None and hi is not None and lo > hi:
            return None
    return lo, hi


def _bisector_feasible(pts, i, j):
    """Is the (i, j) Voronoi facet nonempty (anywhere in the plane)?

    Vectorized float feasibility of the bisector constraints with exact
    fallback on thin margins.
    """
    zi, zj = pts[i], pts[j]
    mx, my = (zi[0] + zj[0]) / 2.0, (zi[1] + zj[1]) / 2.0
    dx, dy = -(zj[1] - zi[1]), zj[0] - zi[0]
    ex = zi[0] - pts[:, 0]
    ey = zi[1] - pts[:, 1]
    a = ex * (zi[0] + pts[:, 0] - 2.0 * mx) + ey * (zi[1] + pts[:, 1] - 2.0 * my)
    b = 2.0 * (ex * dx + ey * dy)
    mask = np.ones(len(pts), dtype=bool)
    mask[i] = mask[j] = False
    with np.errstate(divide="ignore", invalid="ignore"):
        t = a / b
    lob = np.where(mask & (b > 0), t, -np.inf)
    upb = np.where(mask & (b < 0), t, np.inf)
    dead = mask & (b == 0) & (a > 0)
    lo = lob.max() if len(lob) else -np.inf
    hi = upb.min() if len(upb) else np.inf
    feasible = not dead.any() and lo <= hi
    margin = hi - lo
    if np.isfinite(margin) and abs(margin) <= 1e-9 * (1.0 + abs(lo) + abs(hi)):
        iv = _bisector_interval_exact(pts, i, j, range(len(pts)))
        return iv is not None and (iv[0] is None or iv[1] is None or iv[0] < iv[1])
    return bool(feasible)


def naive_voronoi(sample, workbox: Rect | None = None) -> NaiveVoronoi:
    """Direct Voronoi construction: each cell is the intersection of
    bisector half-planes, clipped to a generous working box.

    Adjacency comes from positive-length shared facets; exact rational
    arithmetic resolves tiny facets, including the degenerate tie-break
    (cells meeting at a point are grouped; the pair is adjacent iff it
    contains the lowest index of the group).
    """
    pts = np.asarray(sample.sites if isinstance(sample, PointSample) else sample,
                     dtype=float)
    n = len(pts)
    if n > 2000:
        raise ValueError("naive_voronoi is quadratic; refusing n > 2000")
    if n == 0:
        return NaiveVoronoi(pts, [], set(), [], Rect(0, 0, 1, 1))
    ptp = np.ptp(pts, axis=0) if n > 1 else np.array([1.0, 1.0])
    diam = float(max(ptp.max(), 1.0))
    if workbox is None:
        workbox = Rect(pts[:, 0].min(), pts[:, 1].min(),
                       pts[:, 0].max(), pts[:, 1].max()).dilate(2 * diam + 16)

    cells = []
    candidate_pairs = set()
    tiny_pairs = set()
    vertex_pool = []
    box_touching = []
    order_cache = np.argsort(
        (pts[:, None, :] - pts[None, :, :]).__pow__(2).sum(-1), axis=1)
    for i in range(n):
        poly = [(workbox.x0, workbox.y0), (workbox.x1, workbox.y0),
                (workbox.x1, workbox.y1), (workbox.x0, workbox.y1)]
        tags = [None, None, None, None]
        zi = pts[i]
        for j in order_cache[i][1:]:
            zj = pts[j]
            d2 = float((zi[0] - zj[0]) ** 2 + (zi[1] - zj[1]) ** 2)
            maxd2 = max((vx - zi[0]) ** 2 + (vy - zi[1]) ** 2 for vx, vy in poly)
            if d2 / 4.0 > maxd2:
                break  # all later sites are even farther; cannot cut
            # half-plane closer to zi than zj: 2 (zj - zi) . q <= |zj|^2 - |zi|^2
            a = 2.0 * (zj[0] - zi[0])
            b = 2.0 * (zj[1] - zi[1])
            c = (zj[0] ** 2 + zj[1] ** 2) - (zi[0] ** 2 + zi[1] ** 2)
            poly, tags = _clip_halfplane(poly, tags, a, b, c, int(j))
            if not poly:
                break
        cells.append(Polygon(poly) if len(poly) >= 3 else Polygon())
        vertex_pool.append(poly)
        if any(t is None for t in tags):
            box_touching.append(i)
        m = len(poly)
        for k in range(m):
            if tags[k] is None:
                continue
            qx, qy = poly[k]
            rx, ry = poly[(k + 1) % m]
            length = math.hypot(rx - qx, ry - qy)
            pair = (min(i, tags[k]), max(i, tags[k]))
            if length > _TINY * diam:
                candidate_pairs.add(pair)
            else:
                tiny_pairs.add(pair)

    adjacency = {frozenset(p) for p in candidate_pairs}

    # tiny surviving edges: settle exactly on the bisector
    for (i, j) in sorted(tiny_pairs - candidate_pairs):
        interval = _bisector_interval_exact(pts, i, j, range(n))
        if interval is None:
            continue
        lo, hi = interval
        if lo is None or hi is None or lo < hi:
            adjacency.add(frozenset((i, j)))

    # cells reaching the working box may share facets beyond it; such a
    # facet exists iff the full bisector constraint system is feasible
    for a_ in range(len(box_touching)):
        for b_ in range(a_ + 1, len(box_touching)):
            i, j = box_touching[a_], box_touching[b_]
            if frozenset((i, j)) in adjacency:
                continue
            if _bisector_feasible(pts, i, j):
                adjacency.add(frozenset((i, j)))

    # degenerate Voronoi vertices: >= 4 cocircular cells meeting at a point.
    # Candidates come from cell vertices with >= 4 near-tied sites; each is
    # confirmed exactly (common circumcenter, no strictly closer site).
    group_keys = set()
    for i in range(n):
        for (vx, vy) in vertex_pool[i]:
            d2s = (pts[:, 0] - vx) ** 2 + (pts[:, 1] - vy) ** 2
            m0 = d2s.min()
            cand = np.flatnonzero(d2s <= m0 + 1e-7 * (1.0 + m0))
            if len(cand) >= 4:
                group_keys.add(tuple(sorted(int(c) for c in cand)))

    point_groups = []
    seen_centers = set()
    for group in sorted(group_keys):
        cc = _circumcenter_exact(pts, group[0], group[1], group[2])
        if cc is None or cc in seen_centers:
            continue
        qx, qy = cc
        d2s = [(Fraction(float(pts[k, 0])) - qx) ** 2
               + (Fraction(float(pts[k, 1])) - qy) ** 2 for k in range(n)]
        dmin = min(d2s)
        exact_group = tuple(k for k in range(n) if d2s[k] == dmin)
        if len(exact_group) < 4:
            continue
        seen_centers.add(cc)
        point_groups.append(np.array(exact_group))
        # fan tie-break: the lowest group index is adjacent to every member
        gmin = min(exact_group)
        for k in exact_group:
            if k != gmin:
                adjacency.add(frozenset((gmin, k)))

    return NaiveVoronoi(sites=pts, cells=cells, adjacency=adjacency,
                        point_contact_groups=point_groups, workbox=workbox)


def naive_adjacency_pairs(nv: NaiveVoronoi) -> set:
    return {tuple(sorted(pair)) for pair in nv.adjacency}


# ---------------------------------------------------------------------------
# naive region connectivity on shapely geometry


def region_geometry(region):
    """Shapely polygon of a Rect or closed SquareAnnulus."""
    if isinstance(region, Rect):
        return box(region.x0, region.y0, region.x1, region.y1)
    outer = box(region.cx - region.b, region.cy - region.b,
                region.cx + region.b, region.cy + region.b)
    hole = box(region.cx - region.a, region.cy - region.a,
               region.cx + region.a, region.cy + region.a)
    return outer.difference(hole)


def _pieces_of(geom):
    if geom.is_empty:
        return []
    if isinstance(geom, (MultiPolygon, GeometryCollection)):
        return [g for g in geom.geoms if not g.is_empty]
    return [geom]


def naive_components(nv: NaiveVoronoi, colors: np.ndarray, color: str, region,
                     tol: float = 1e-9):
    """Pieces of colored cells clipped to the region, labeled by component.

    Returns (piece_sites, piece_geoms, labels).  Cells were clipped
    independently, so their shared facets agree only to rounding; contact is
    therefore decided by distance <= tol, which realizes the closed-cell
    convention on instances whose true clearances exceed tol (almost surely
    for continuous samples, exactly for integer-coordinate fixtures).
    """
    want = colors if color == "black" else ~colors
    rg = region_geometry(region)
    piece_sites = []
    piece_geoms = []
    for i in np.flatnonzero(want):
        inter = nv.cells[i].intersection(rg)
        for g in _pieces_of(inter):
            piece_sites.append(i)
            piece_geoms.append(g)
    m = len(piece_geoms)
    parent = list(range(m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    if m:
        tree = STRtree([g.buffer(tol) if g.geom_type != "Polygon" else g
                        for g in piece_geoms])
        for a in range(m):
            for b in tree.query(piece_geoms[a].buffer(tol)):
                b = int(b)
                if b > a and piece_geoms[a].distance(piece_geoms[b]) <= tol:
                    union(a, b)
    labels = np.array([find(k) for k in range(m)], dtype=int)
    return np.array(piece_sites, dtype=int), piece_geoms, labels


def _touching_labels(piece_geoms, labels, geom, tol: float = 1e-9) -> set:
    out = set()
    for k, g in enumerate(piece_geoms):
        if g.distance(geom) <= tol:
            out.add(int(labels[k]))
    return out


def naive_connected(nv, colors, color, region, contact_a, contact_b) -> bool:
    """Independent decision: some component of the color in the region
    touches both contact geometries (shapely objects)."""
    _, geoms, labels = naive_components(nv, colors, color, region)
    return bool(_touching_labels(geoms, labels, contact_a)
                & _touching_labels(geoms, labels, contact_b))


def naive_touches_all(nv, colors, color, region, contact_geoms) -> bool:
    _, geoms, labels = naive_components(nv, colors, color, region)
    acc = None
    for cg in contact_geoms:
        lab = _touching_labels(geoms, labels, cg)
        acc = lab if acc is None else acc & lab
        if not acc:
            return False
    return bool(acc)


# ---------------------------------------------------------------------------
# raster oracles


@dataclass
class RasterField:
    """Nearest-site colors on a pixel grid over a rectangle."""

    region: Rect
    h: float
    xs: np.ndarray
    ys: np.ndarray
    site_index: np.ndarray        # (nx, ny)
    black: np.ndarray             # (nx, ny) bool


def raster_field(tiling: ColoredTiling, region: Rect, h: float) -> RasterField:
    """Color each pixel by the color of its center's nearest site (ties to
    the lowest index, resolved exactly when the float margin is thin)."""
    xs = np.arange(region.x0 + h / 2.0, region.x1, h)
    ys = np.arange(region.y0 + h / 2.0, region.y1, h)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    q = np.column_stack([X.ravel(), Y.ravel()])
    pts = tiling.sample.sites
    tree = cKDTree(pts)
    dist, idx = tree.query(q, k=2)
    near_tie = dist[:, 1] - dist[:, 0] <= 1e-9 * (1.0 + dist[:, 0])
    take = idx[:, 0].copy()
    for row in np.flatnonzero(near_tie):
        qx, qy = Fraction(float(q[row, 0])), Fraction(float(q[row, 1]))
        best, bestd = None, None
        for k in idx[row]:
            dx = Fraction(float(pts[k, 0])) - qx
            dy = Fraction(float(pts[k, 1])) - qy
            dd = dx * dx + dy * dy
            if bestd is None or dd < bestd or (dd == bestd and k < best):
                best, bestd = int(k), dd
        take[row] = best
    site_index = take.reshape(X.shape)
    black = tiling.colors[site_index]
    return RasterField(region=region, h=h, xs=xs, ys=ys,
                       site_index=site_index, black=black)


_EIGHT = np.ones((3, 3), dtype=int)


def _mask_connected(mask: np.ndarray, amask: np.ndarray, bmask: np.ndarray) -> bool:
    lab, _ = ndimage.label(mask, structure=_EIGHT)
    la = set(np.unique(lab[amask & mask])) - {0}
    lb = set(np.unique(lab[bmask & mask])) - {0}
    return bool(la & lb)


def _clearance_robust(field: RasterField, mask: np.ndarray, amask, bmask,
                      decision: bool) -> bool:
    """Decision is robust iff it survives eroding the deciding color by the
    clearance threshold 2*sqrt(2)*h (pixel connectivity is only trusted for
    corridors wider than a pixel diagonal)."""
    thr = 2.0 * math.sqrt(2.0)
    if decision:
        d = ndimage.distance_transform_edt(mask)
        return _mask_connected(mask & (d >= thr), amask, bmask)
    d = ndimage.distance_transform_edt(~mask)
    blocked = ~(~mask & (d >= thr))
    return not _mask_connected(blocked, amask, bmask)


def raster_connectivity(tiling: ColoredTiling, region: Rect, color: str,
                        h: float, contacts=("left", "right"),
                        inner_rect: Rect | None = None):
    """Raster decision for a side-to-side (or rect-to-boundary) connection.

    contacts are side names of the region ('left','right','bottom','top'),
    or 'inner' paired with inner_rect for arm-type events.  Returns
    (decision, robust); non-robust decisions have interface clearance below
    2*sqrt(2)*h and may be excused in comparisons.
    """
    field = raster_field(tiling, region, h)
    mask = field.black if color == "black" else ~field.black

    def contact_mask(name):
        m = np.zeros_like(mask)
        if name == "left":
            m[0, :] = True
        elif name == "right":
            m[-1, :] = True
        elif name == "bottom":
            m[:, 0] = True
        elif name == "top":
            m[:, -1] = True
        elif name == "inner":
            X, Y = np.meshgrid(field.xs, field.ys, indexing="ij")
            m = ((X >= inner_rect.x0) & (X <= inner_rect.x1)
                 & (Y >= inner_rect.y0) & (Y <= inner_rect.y1))
        else:
            raise ValueError(f"unknown raster contact {name!r}")
        return m

    am = contact_mask(contacts[0])
    bm = contact_mask(contacts[1])
    decision = _mask_connected(mask, am, bm)
    robust = _clearance_robust(field, mask, am, bm, decision)
    return decision, robust


def raster_circuit(tiling: ColoredTiling, a: float, b: float, color: str,
                   h: float):
    """Raster winding oracle: flood the opposite color from the inner
    boundary; the circuit exists iff the flood never reaches the outer
    boundary.  Returns (decision, robust)."""
    region = Rect(-b, -b, b, b)
    field = raster_field(tiling, region, h)
    dual = ~field.black if color == "black" else field.black
    X, Y = np.meshgrid(field.xs, field.ys, indexing="ij")
    hole = (np.abs(X) <= a) & (np.abs(Y) <= a)
    ring = ndimage.binary_dilation(hole) & ~hole
    border = np.zeros_like(dual)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    dual_ann = dual & ~hole
    radial = _mask_connected(dual_ann, ring, border)
    decision = not radial
    # robustness mirrors the radial-crossing decision
    if radial:
        d = ndimage.distance_transform_edt(dual_ann)
        robust = _mask_connected(dual_ann & (d >= 2.0 * math.sqrt(2.0)), ring, border)
    else:
        d = ndimage.distance_transform_edt(~dual_ann & ~hole)
        blocked = ~((~dual_ann & ~hole) & (d >= 2.0 * math.sqrt(2.0))) & ~hole
        robust = not _mask_connected(blocked, ring, border)
    return decision, robust
