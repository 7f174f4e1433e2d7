import math

import numpy as np
import pytest
from scipy import stats

from voronoi_rsw.geom import (
    PointSample,
    Rect,
    SquareAnnulus,
    cell_view,
    delaunay,
    determinism_certificate,
    distance_to_unsampled,
    extend_sample,
    max_nearest_distance,
    nearest_site,
    region_covered,
    region_rects,
    sample_poisson,
    shell_rects,
    subtract_union,
)
from voronoi_rsw.streams import derive_stream
from voronoi_rsw.tiling import ColoredTiling, GraphCache, color_sites
from voronoi_rsw.events import crossing, one_arm


# ---------------------------------------------------------------------------
# sampling


def test_zero_area_region_gives_empty_sample():
    s = sample_poisson(Rect(0, 0, 0, 5), 1.0, derive_stream(0, 0, "p"))
    assert s.n == 0


def test_inverted_region_rejected():
    with pytest.raises(ValueError):
        Rect(1, 0, 0, 5)


def test_poisson_mean_count():
    # law of large numbers at vol=100: mean over 1000 fixed streams in [99, 101]
    counts = [sample_poisson(Rect(0, 0, 10, 10), 1.0, derive_stream(42, i, "pos")).n
              for i in range(1000)]
    assert 99.0 <= np.mean(counts) <= 101.0


def test_poisson_pmf_chi_square():
    # P(k in A) = vol^k/k! e^{-vol} at vol=4, k in 0..12, pooled tail
    vol = 4.0
    reps = 10 ** 5
    gen = derive_stream(7, 0, "pmf").gen
    ks = gen.poisson(vol, size=reps)
    edges = list(range(14))
    obs = np.bincount(np.minimum(ks, 13), minlength=14)
    pmf = np.array([vol ** k / math.factorial(k) * math.exp(-vol) for k in range(13)])
    expected = np.append(pmf, 1.0 - pmf.sum()) * reps
    chi2 = ((obs - expected) ** 2 / expected).sum()
    pval = stats.chi2.sf(chi2, df=13)
    assert pval > 0.001


def test_extend_zero_area_unchanged():
    s = sample_poisson(Rect(0, 0, 4, 4), 1.0, derive_stream(1, 0, "p"))
    s2 = extend_sample(s, Rect(4, 0, 4, 4), derive_stream(1, 0, "q"))
    assert s2 is s


def test_extend_overlap_rejected():
    s = sample_poisson(Rect(0, 0, 4, 4), 1.0, derive_stream(1, 0, "p"))
    with pytest.raises(ValueError, match="overlap"):
        extend_sample(s, Rect(3, 0, 5, 4), derive_stream(1, 0, "q"))


def test_progressive_extension_matches_direct_law():
    # counts in a probe rectangle across the A/B seam: two-sample chi-square
    probe = Rect(1, 0, 3, 2)
    reps = 10 ** 4
    split_counts = np.empty(reps, dtype=int)
    direct_counts = np.empty(reps, dtype=int)
    for i in range(reps):
        a = sample_poisson(Rect(0, 0, 2, 2), 1.0, derive_stream(11, i, "a"))
        ab = extend_sample(a, Rect(2, 0, 4, 2), derive_stream(11, i, "b"))
        pts = ab.sites
        split_counts[i] = int(np.sum((pts[:, 0] >= 1) & (pts[:, 0] <= 3)
                                     & (pts[:, 1] >= 0) & (pts[:, 1] <= 2)))
        d = sample_poisson(Rect(0, 0, 4, 2), 1.0, derive_stream(12, i, "d"))
        pts = d.sites
        direct_counts[i] = int(np.sum((pts[:, 0] >= 1) & (pts[:, 0] <= 3)
                                      & (pts[:, 1] >= 0) & (pts[:, 1] <= 2)))
    hi = max(split_counts.max(), direct_counts.max())
    o1 = np.bincount(split_counts, minlength=hi + 1)
    o2 = np.bincount(direct_counts, minlength=hi + 1)
    keep = (o1 + o2) >= 10
    o1p = np.append(o1[keep], o1[~keep].sum())
    o2p = np.append(o2[keep], o2[~keep].sum())
    table = np.vstack([o1p, o2p])
    table = table[:, table.sum(axis=0) > 0]
    _, pval, _, _ = stats.chi2_contingency(table)
    assert pval > 0.001


# ---------------------------------------------------------------------------
# triangulation


def test_three_sites_one_triangle():
    tri = delaunay(np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.5]]))
    assert len(tri.simplices) == 1
    pairs = set(map(tuple, np.sort(tri.edges, axis=1).tolist()))
    assert pairs == {(0, 1), (0, 2), (1, 2)}


def test_cocircular_square_tie_break():
    tri = delaunay(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    assert len(tri.simplices) == 2
    pairs = set(map(tuple, np.sort(tri.edges, axis=1).tolist()))
    assert (0, 2) in pairs and (1, 3) not in pairs
    assert [g.tolist() for g in tri.coincident_groups] == [[0, 1, 2, 3]]


def test_planarity_bound():
    st = derive_stream(3, 0, "pos")
    pts = st.gen.uniform(0, 10, size=(100, 2))
    tri = delaunay(pts)
    assert len(tri.edges) <= 3 * 100 - 6


def test_duplicate_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        delaunay(np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]))


def test_collinear_degenerates_to_path():
    tri = delaunay(np.array([[0.0, 0.0], [3.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
    assert tri.degenerate
    pairs = set(map(tuple, np.sort(tri.edges, axis=1).tolist()))
    assert pairs == {(0, 2), (2, 3), (1, 3)}


def test_empty_sample_degenerate():
    tri = delaunay(np.empty((0, 2)))
    assert tri.degenerate and tri.n == 0


def test_facets_lie_on_bisectors():
    # every facet point is equidistant from its two sites (1e-9 relative)
    st = derive_stream(9, 0, "pos")
    samp = sample_poisson(Rect(0, 0, 8, 8), 1.0, st)
    tri = delaunay(samp)
    for e in range(len(tri.edges)):
        if not tri.facet_valid[e]:
            continue
        i, j = tri.edges[e]
        for q in (tri.facet_p0[e], tri.facet_p1[e]):
            di = math.hypot(q[0] - tri.points[i, 0], q[1] - tri.points[i, 1])
            dj = math.hypot(q[0] - tri.points[j, 0], q[1] - tri.points[j, 1])
            assert abs(di - dj) <= 1e-9 * max(1.0, di)


def test_cell_view_facets():
    tri = delaunay(np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.5], [1.0, -1.5]]))
    view = cell_view(tri, 0)
    assert {f[0] for f in view.facets} == {1, 2, 3}


# ---------------------------------------------------------------------------
# nearest site


def test_nearest_single_site():
    idx, d = nearest_site(np.array([[1.0, 1.0]]), (4.0, 5.0))
    assert idx == 0 and abs(d - 5.0) < 1e-12


def test_nearest_tie_lowest_index():
    pts = np.array([[1.0, 1.0], [3.0, 1.0], [-1.0, 1.0], [1.0, 3.0]])
    # query (2,1) equidistant from 0 and 1; tie goes to 0
    idx, _ = nearest_site(pts, (2.0, 1.0))
    assert idx == 0
    pts2 = np.array([[5.0, 0.0], [0.0, 0.0], [2.0, 0.0], [4.0, 0.0]])
    idx2, _ = nearest_site(pts2, (3.0, 0.0))
    assert idx2 == 2


def test_nearest_matches_linear_scan():
    gen = derive_stream(17, 0, "pos").gen
    pts = gen.uniform(0, 20, size=(500, 2))
    qs = gen.uniform(0, 20, size=(1000, 2))
    for q in qs:
        idx, d = nearest_site(pts, q)
        d2 = ((pts - q) ** 2).sum(axis=1)
        assert idx == int(d2.argmin())
        assert abs(d - math.sqrt(d2.min())) < 1e-12


# ---------------------------------------------------------------------------
# max nearest distance / certificate


def test_max_nd_single_site_center():
    samp = PointSample(sites=np.array([[0.0, 0.0]]), windows=(Rect(-1, -1, 1, 1),),
                       intensity=1.0, provenance=())
    assert abs(max_nearest_distance(samp, Rect(-1, -1, 1, 1)) - math.sqrt(2)) < 1e-12


def test_max_nd_grid_cover_bound():
    xs = np.linspace(-4, 12, 33)
    grid = np.array([(x, y) for x in xs for y in xs])
    samp = PointSample(sites=grid, windows=(Rect(-4, -4, 12, 12),),
                       intensity=1.0, provenance=())
    h = xs[1] - xs[0]
    val = max_nearest_distance(samp, Rect(0, 0, 8, 8))
    assert val <= h * math.sqrt(2) / 2 + 1e-9


def test_max_nd_matches_raster_estimate():
    for i in range(5):
        samp = sample_poisson(Rect(-4, -4, 12, 12), 1.0, derive_stream(23, i, "pos"))
        region = Rect(0, 0, 8, 8)
        val = max_nearest_distance(samp, region)
        h = 0.02
        xs = np.arange(0 + h / 2, 8, h)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        q = np.column_stack([X.ravel(), Y.ravel()])
        d2 = ((q[:, None, :] - samp.sites[None, :, :]) ** 2).sum(-1)
        raster = math.sqrt(d2.min(axis=1).max())
        assert raster <= val + 1e-12        # raster max is a lower bound
        assert val <= raster + 2 * h        # and tight at resolution h


def test_max_nd_annulus_region():
    samp = PointSample(sites=np.array([[0.0, 0.0]]), windows=(Rect(-4, -4, 4, 4),),
                       intensity=1.0, provenance=())
    val = max_nearest_distance(samp, SquareAnnulus(1.0, 4.0))
    assert abs(val - 4.0 * math.sqrt(2)) < 1e-12


def test_max_nd_region_escape_raises():
    samp = sample_poisson(Rect(0, 0, 4, 4), 1.0, derive_stream(2, 0, "p"))
    with pytest.raises(ValueError, match="escapes"):
        max_nearest_distance(samp, Rect(0, 0, 8, 8))


def test_certificate_zero_margin_false():
    samp = sample_poisson(Rect(0, 0, 8, 8), 1.0, derive_stream(4, 0, "p"))
    assert determinism_certificate(samp, Rect(0, 0, 8, 8)) is False


def test_certificate_empty_sample_false():
    samp = PointSample(sites=np.empty((0, 2)), windows=(Rect(0, 0, 8, 8),),
                       intensity=1.0, provenance=())
    assert determinism_certificate(samp, Rect(2, 2, 4, 4)) is False


def test_certificate_margin_true_and_stable_under_injection():
    """certificate = true implies event decisions ignore appended far sites."""
    region = Rect(0, 0, 8, 8)
    flips = 0
    for i in range(40):
        samp = sample_poisson(Rect(-4, -4, 12, 12), 1.0, derive_stream(31, i, "pos"))
        tri = delaunay(samp)
        assert determinism_certificate(samp, region, tri=tri)
        colors_stream = derive_stream(31, i, "col")
        tiling = color_sites(samp, 0.5, colors_stream, tri=tri).with_certified((region,))
        base = crossing(tiling, 1.0, 8.0)

        # adversarial sites hugging the sampled boundary, in both colors
        gen = derive_stream(31, i, "adv").gen
        t = gen.uniform(0, 1, size=40)
        ring = []
        for k, tv in enumerate(t):
            side = k % 4
            u = -4 + 16 * tv
            eps = 1e-6
            ring.append({0: (u, -4 - eps), 1: (u, 12 + eps),
                         2: (-4 - eps, u), 3: (12 + eps, u)}[side])
        ring = np.array(ring)
        ext_sites = np.vstack([samp.sites, ring])
        ext_windows = samp.windows + (Rect(-5, -5, 13, -4), Rect(-5, 12, 13, 13),
                                      Rect(-5, -4, -4, 12), Rect(12, -4, 13, 12))
        ext = PointSample(sites=ext_sites, windows=ext_windows,
                          intensity=1.0, provenance=())
        for extra_color in (True, False):
            colors = np.concatenate([tiling.colors,
                                     np.full(len(ring), extra_color)])
            t2 = ColoredTiling(sample=ext, tri=delaunay(ext), colors=colors,
                               p=0.5, color_stream_id="adv",
                               certified=(region,))
            flips += crossing(t2, 1.0, 8.0) != base
    assert flips == 0


def test_shell_and_coverage_algebra():
    ann = SquareAnnulus(2, 4)
    rects = region_rects(ann)
    assert len(rects) == 4
    assert region_covered(ann, tuple(rects))
    assert not region_covered(Rect(-5, -5, 5, 5), tuple(rects))
    shells = shell_rects(ann, 0.0, 1.0)
    total = sum(r.area for r in shells)
    expect = (10 * 10 - 2 * 2) - (8 * 8 - 4 * 4)
    assert abs(total - expect) < 1e-9
    assert abs(distance_to_unsampled(ann, tuple(region_rects(ann.dilate(1.5)))) - 1.5) < 1e-12
    assert subtract_union([Rect(0, 0, 4, 4)], [Rect(0, 0, 4, 4)]) == []
