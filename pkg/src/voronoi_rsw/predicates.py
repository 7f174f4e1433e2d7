"""Exact-sign geometric predicates with floating-point filters.

Connectivity answers must not depend on tolerances, so every geometric
sign that feeds a decision is computed adaptively: a fast double-precision
evaluation with a forward error bound, falling back to exact rational
arithmetic when the float result is ambiguous.  Doubles are dyadic
rationals, hence Fraction evaluation of a polynomial in the inputs is
exact.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

_EPS = float(np.finfo(np.float64).eps) / 2.0  # 2^-53
# Shewchuk-style static error bounds for the direct float evaluations.
CCW_BOUND = (3.0 + 16.0 * _EPS) * _EPS
INCIRCLE_BOUND = (10.0 + 96.0 * _EPS) * _EPS


def _sign(x) -> int:
    return int(x > 0) - int(x < 0)


# ---------------------------------------------------------------------------
# scalar predicates


def orient2d(ax, ay, bx, by, cx, cy) -> int:
    """Sign of twice the signed area of (a, b, c): +1 CCW, -1 CW, 0 collinear."""
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    detsum = abs(detleft) + abs(detright)
    if abs(det) > CCW_BOUND * detsum:
        return _sign(det)
    return orient2d_exact(ax, ay, bx, by, cx, cy)


def orient2d_exact(ax, ay, bx, by, cx, cy) -> int:
    ax, ay = Fraction(ax), Fraction(ay)
    bx, by = Fraction(bx), Fraction(by)
    cx, cy = Fraction(cx), Fraction(cy)
    det = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)
    return _sign(det)


def incircle(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    """Sign of the incircle determinant for CCW triangle (a, b, c).

    +1 iff d lies strictly inside the circumcircle, -1 strictly outside,
    0 iff the four points are cocircular.
    """
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy

    bdxcdy, cdxbdy = bdx * cdy, cdx * bdy
    cdxady, adxcdy = cdx * ady, adx * cdy
    adxbdy, bdxady = adx * bdy, bdx * ady
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy

    det = (alift * (bdxcdy - cdxbdy)
           + blift * (cdxady - adxcdy)
           + clift * (adxbdy - bdxady))
    permanent = ((abs(bdxcdy) + abs(cdxbdy)) * alift
                 + (abs(cdxady) + abs(adxcdy)) * blift
                 + (abs(adxbdy) + abs(bdxady)) * clift)
    if abs(det) > INCIRCLE_BOUND * permanent:
        return _sign(det)
    return incircle_exact(ax, ay, bx, by, cx, cy, dx, dy)


def incircle_exact(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    ax, ay = Fraction(ax), Fraction(ay)
    bx, by = Fraction(bx), Fraction(by)
    cx, cy = Fraction(cx), Fraction(cy)
    dx, dy = Fraction(dx), Fraction(dy)
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    det = ((adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
           + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
           + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady))
    return _sign(det)


# ---------------------------------------------------------------------------
# vectorized filters (fast path; callers escalate ambiguous rows)


def orient2d_filter(ax, ay, bx, by, cx, cy):
    """Vectorized orientation filter.

    Returns (det, ambiguous): sign(det) is trustworthy wherever
    ``ambiguous`` is False.
    """
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    detsum = np.abs(detleft) + np.abs(detright)
    ambiguous = np.abs(det) <= CCW_BOUND * detsum
    return det, ambiguous


def incircle_filter(ax, ay, bx, by, cx, cy, dx, dy):
    """Vectorized incircle filter; see orient2d_filter."""
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy

    bdxcdy, cdxbdy = bdx * cdy, cdx * bdy
    cdxady, adxcdy = cdx * ady, adx * cdy
    adxbdy, bdxady = adx * bdy, bdx * ady
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy

    det = (alift * (bdxcdy - cdxbdy)
           + blift * (cdxady - adxcdy)
           + clift * (adxbdy - bdxady))
    permanent = ((np.abs(bdxcdy) + np.abs(cdxbdy)) * alift
                 + (np.abs(cdxady) + np.abs(adxcdy)) * blift
                 + (np.abs(adxbdy) + np.abs(bdxady)) * clift)
    ambiguous = np.abs(det) <= INCIRCLE_BOUND * permanent
    return det, ambiguous


# ---------------------------------------------------------------------------
# exact rational helpers


def circumcenter_exact(a, b, c):
    """Exact circumcenter of a non-degenerate triangle as a Fraction pair."""
    ax, ay = Fraction(a[0]), Fraction(a[1])
    bx, by = Fraction(b[0]) - ax, Fraction(b[1]) - ay
    cx, cy = Fraction(c[0]) - ax, Fraction(c[1]) - ay
    d = 2 * (bx * cy - by * cx)
    if d == 0:
        raise ValueError("collinear triangle has no circumcenter")
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (cy * b2 - by * c2) / d
    uy = (bx * c2 - cx * b2) / d
    return ax + ux, ay + uy


def segment_hits_rect_exact(p0, p1, rect) -> bool:
    """Exact closed-set test: does segment [p0, p1] meet the closed rect?

    p0/p1 are pairs of Fraction (or exactly-representable floats); rect is
    (x0, y0, x1, y1).  Touching at a single point counts.
    """
    x0, y0, x1, y1 = (Fraction(v) for v in rect)
    px, py = Fraction(p0[0]), Fraction(p0[1])
    dx, dy = Fraction(p1[0]) - px, Fraction(p1[1]) - py

    lo, hi = Fraction(0), Fraction(1)
    for q, d, b0, b1 in ((px, dx, x0, x1), (py, dy, y0, y1)):
        if d == 0:
            if q < b0 or q > b1:
                return False
            continue
        t0, t1 = (b0 - q) / d, (b1 - q) / d
        if t0 > t1:
            t0, t1 = t1, t0
        lo = max(lo, t0)
        hi = min(hi, t1)
        if lo > hi:
            return False
    return True


def cell_segment_interval_exact(site, neighbors, p0, p1):
    """Exact parameter interval of Voronoi-cell(site) intersected with segment p0->p1.

    ``neighbors`` is an iterable of points defining the cell's half-plane
    constraints.  Returns (lo, hi) Fractions clipped to [0, 1], or None when
    empty.  Closed-cell convention: ties (points equidistant to site and a
    neighbor) belong to the cell.
    """
    sx, sy = Fraction(site[0]), Fraction(site[1])
    px, py = Fraction(p0[0]), Fraction(p0[1])
    dx, dy = Fraction(p1[0]) - px, Fraction(p1[1]) - py
    lo, hi = Fraction(0), Fraction(1)
    for nb in neighbors:
        nx, ny = Fraction(nb[0]), Fraction(nb[1])
        # g(t) = |q-site|^2 - |q-nb|^2 = A - B t  with q = p0 + t d; need g <= 0
        ex, ey = sx - nx, sy - ny
        a = ex * (sx + nx - 2 * px) + ey * (sy + ny - 2 * py)
        bcoef = 2 * (ex * dx + ey * dy)
        if bcoef == 0:
            if a > 0:
                return None
            continue
        t = a / bcoef
        if bcoef > 0:
            lo = max(lo, t)
        else:
            hi = min(hi, t)
        if lo > hi:
            return None
    return lo, hi
