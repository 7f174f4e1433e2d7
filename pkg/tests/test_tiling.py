import numpy as np
import pytest

from voronoi_rsw.geom import PointSample, Rect, SquareAnnulus, delaunay, sample_poisson
from voronoi_rsw.oracle import naive_components, naive_voronoi
from voronoi_rsw.streams import derive_stream
from voronoi_rsw.tiling import (
    ColoredTiling,
    GraphCache,
    UncertifiedRegionError,
    cells_touching_rect,
    cells_touching_segment,
    clipped_graph,
    color_sites,
    connected,
)
from voronoi_rsw.events import crossing


def fixture_tiling(sites, colors, window, certified):
    samp = PointSample(sites=np.asarray(sites, dtype=float), windows=(window,),
                       intensity=1.0, provenance=())
    tri = delaunay(samp)
    return ColoredTiling(sample=samp, tri=tri, colors=np.asarray(colors, dtype=bool),
                         p=0.5, color_stream_id="fixture", certified=tuple(certified))


def test_color_extremes():
    samp = sample_poisson(Rect(0, 0, 6, 6), 1.0, derive_stream(0, 0, "p"))
    t1 = color_sites(samp, 1.0, derive_stream(0, 0, "c"))
    t0 = color_sites(samp, 0.0, derive_stream(0, 0, "c"))
    assert t1.colors.all() and not t0.colors.any()


def test_color_p_validation():
    samp = sample_poisson(Rect(0, 0, 2, 2), 1.0, derive_stream(0, 1, "p"))
    with pytest.raises(ValueError):
        color_sites(samp, 1.5, derive_stream(0, 1, "c"))


def test_monotone_coupling_inclusion():
    samp = sample_poisson(Rect(0, 0, 8, 8), 1.0, derive_stream(1, 0, "p"))
    tri = delaunay(samp)
    lo = color_sites(samp, 0.3, derive_stream(1, 0, "c"), tri=tri)
    hi = color_sites(samp, 0.6, derive_stream(1, 0, "c"), tri=tri)
    assert np.all(hi.colors[lo.colors])       # black set at 0.3 ⊆ black set at 0.6


def test_single_black_cell_touches_all_sides():
    t = fixture_tiling([[0.0, 0.0]], [True], Rect(-4, -4, 4, 4),
                       [Rect(-1, -1, 1, 1)])
    g = clipped_graph(t, Rect(-1, -1, 1, 1), "black")
    assert list(g.nodes) == [0]
    for side in ("left", "right", "bottom", "top"):
        assert g.contacts[side].any()
    assert connected(g, "left", "right")


def test_two_site_bisector_fixture():
    # black site left of the bisector x=0, white right
    t = fixture_tiling([[-1.0, 0.0], [1.0, 0.0]], [True, False],
                       Rect(-8, -8, 8, 8), [Rect(-2, -1, 2, 1)])
    g = clipped_graph(t, Rect(-2, -1, 2, 1), "black")
    assert list(g.nodes) == [0]
    assert g.contacts["left"].any() and g.contacts["top"].any() \
        and g.contacts["bottom"].any()
    assert not g.contacts["right"].any()
    assert not connected(g, "left", "right")
    assert connected(g, "bottom", "top")


def test_empty_graph_not_connected():
    t = fixture_tiling([[0.0, 0.0]], [False], Rect(-4, -4, 4, 4),
                       [Rect(-1, -1, 1, 1)])
    g = clipped_graph(t, Rect(-1, -1, 1, 1), "black")
    assert len(g.nodes) == 0
    assert not connected(g, "left", "right")


def test_uncertified_region_raises():
    samp = sample_poisson(Rect(0, 0, 6, 6), 1.0, derive_stream(5, 0, "p"))
    t = color_sites(samp, 0.5, derive_stream(5, 0, "c"))
    with pytest.raises(UncertifiedRegionError):
        clipped_graph(t, Rect(0, 0, 6, 6), "black")


def test_components_match_naive_oracle():
    region = Rect(0, 0, 6, 6)
    for i in range(15):
        samp = sample_poisson(Rect(-4, -4, 10, 10), 1.0, derive_stream(6, i, "p"))
        tri = delaunay(samp)
        t = color_sites(samp, 0.5, derive_stream(6, i, "c"), tri=tri) \
            .with_certified((region,))
        g = clipped_graph(t, region, "black")
        nv = naive_voronoi(samp)
        psites, _, plabels = naive_components(nv, t.colors, "black", region)
        # same node set
        assert set(g.nodes.tolist()) == set(np.unique(psites).tolist())
        # same partition: compare induced site partitions
        def partition(sites, labels):
            groups = {}
            for s, l in zip(sites, labels):
                groups.setdefault(l, set()).add(int(s))
            return {frozenset(v) for v in groups.values()}
        exact_part = partition(g.piece_sites, g.piece_labels)
        naive_part = partition(psites, plabels)
        assert exact_part == naive_part


def test_vertex_contact_counts_as_connected():
    # 4 cocircular sites: the (0,2) diagonal cells meet only at the center,
    # and so do (1,3); closed cells make both pairs connected through it
    sites = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    window = Rect(-4, -4, 5, 5)
    region = Rect(0.2, 0.2, 0.8, 0.8)
    t = fixture_tiling(sites, [True, False, True, False], window, [region])
    g = clipped_graph(t, region, "black")   # sites 0 and 2, diagonal contact
    labs = {int(g.piece_labels[k]) for k in range(len(g.piece_sites))}
    assert len(set(g.piece_sites.tolist())) == 2
    assert len(labs) == 1                    # one component through the vertex
    t2 = fixture_tiling(sites, [False, True, False, True], window, [region])
    g2 = clipped_graph(t2, region, "white")
    labs2 = {int(g2.piece_labels[k]) for k in range(len(g2.piece_sites))}
    assert len(labs2) == 1                   # non-chosen diagonal also connects


def test_annulus_cell_split_by_hole_not_merged():
    # one huge black cell wrapping the hole is split into pieces; a white
    # blocker on one side must keep the two pieces apart in the graph
    sites = [[-6.0, 0.0], [6.0, 0.0]]
    window = Rect(-16, -16, 16, 16)
    ann = SquareAnnulus(4.0, 8.0)
    t = fixture_tiling(sites, [True, True], window, [ann])
    g = clipped_graph(t, ann, "black")
    # both cells wrap around; everything is one component here
    assert len(set(g.piece_labels.tolist())) == 1
    # now make the right cell white: the left black cell still wraps around
    # the hole (top and bottom) and stays connected
    t2 = fixture_tiling(sites, [True, False], window, [ann])
    g2 = clipped_graph(t2, ann, "black")
    assert len(set(g2.piece_labels.tolist())) == 1

    # collinear sites make a horizontal slab cell crossing over the hole:
    # its left and right annulus pieces are genuinely disconnected
    sites3 = [[0.0, 6.0], [0.0, 0.0], [0.0, -6.0]]
    t3 = fixture_tiling(sites3, [False, True, False], window, [ann])
    g3 = clipped_graph(t3, ann, "black")
    assert set(g3.piece_sites.tolist()) == {1}
    assert len(set(g3.piece_labels.tolist())) == 2   # pieces must stay separate


def test_region_restriction_monotonicity():
    # a crossing found inside a sub-rectangle persists in the full tiling
    # region; allowing more area can only create crossings
    for i in range(25):
        samp = sample_poisson(Rect(-4, -4, 16, 8), 1.0, derive_stream(8, i, "p"))
        tri = delaunay(samp)
        narrow = Rect(0, 0, 6, 4)
        wide = Rect(0, 0, 12, 4)
        t = color_sites(samp, 0.5, derive_stream(8, i, "c"), tri=tri) \
            .with_certified((narrow, wide))
        cache = GraphCache(t)
        gn = cache.graph(narrow, "black")
        gw = cache.graph(wide, "black")
        from voronoi_rsw.geom import Segment
        left = Segment((0.0, 0.0), (0.0, 4.0))
        mid = Segment((6.0, 0.0), (6.0, 4.0))
        narrow_cross = bool(cache.components_touching(gn, left)
                            & cache.components_touching(gn, mid))
        wide_reach = bool(cache.components_touching(gw, left)
                          & cache.components_touching(gw, mid))
        if narrow_cross:
            assert wide_reach


def test_color_symmetry_at_half():
    # empirical P(black crossing) == P(white crossing) within 3 CI halfwidths
    from voronoi_rsw.mc import TrialPlan, TrialProgram, WindowPlan, run_program
    from voronoi_rsw.events import Crossing
    box = Rect(0, 0, 8, 8)
    prog = TrialProgram(
        windows=(WindowPlan(box, 4.0, (box,)),),
        events=((0, Crossing(rho=1.0, s=8.0, p=0.5, color="black")),
                (0, Crossing(rho=1.0, s=8.0, p=0.5, color="white"))),
        p=0.5)
    je = run_program(prog, TrialPlan(n_max=2000), 77)
    eb, ew = je.marginal(0), je.marginal(1)
    assert abs(eb.p_hat - ew.p_hat) <= 3 * (eb.halfwidth + ew.halfwidth) / 2 + 1e-12
