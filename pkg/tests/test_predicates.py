import numpy as np

from voronoi_rsw import predicates as pr


def test_orient2d_signs():
    assert pr.orient2d(0, 0, 1, 0, 0, 1) == 1
    assert pr.orient2d(0, 0, 0, 1, 1, 0) == -1
    assert pr.orient2d(0, 0, 1, 1, 2, 2) == 0


def test_orient2d_near_degenerate_exact():
    # collinear up to one ulp: the exact sign must match rational arithmetic
    a = (0.0, 0.0)
    b = (1.0, 1.0)
    c = (2.0, 2.0 + 2.0 ** -51)     # one ulp above the line
    assert pr.orient2d(*a, *b, *c) == pr.orient2d_exact(*a, *b, *c) == 1
    c2 = (2.0, 2.0 - 2.0 ** -52)    # one ulp below
    assert pr.orient2d(*a, *b, *c2) == -1


def test_incircle_basic():
    # CCW unit right triangle; origin-centered disk membership
    tri = (0.0, 0.0, 1.0, 0.0, 0.0, 1.0)
    assert pr.incircle(*tri, 0.4, 0.4) == 1      # inside
    assert pr.incircle(*tri, 2.0, 2.0) == -1     # outside
    assert pr.incircle(*tri, 1.0, 1.0) == 0      # cocircular corner


def test_incircle_filter_flags_ties():
    sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    det, amb = pr.incircle_filter(sq[0, 0], sq[0, 1], sq[1, 0], sq[1, 1],
                                  sq[2, 0], sq[2, 1], sq[3, 0], sq[3, 1])
    assert amb  # exact tie must be flagged for escalation
    assert pr.incircle_exact(0, 0, 1, 0, 1, 1, 0, 1) == 0


def test_filter_agrees_with_exact_on_random():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5, 5, size=(200, 8))
    det, amb = pr.incircle_filter(*[pts[:, k] for k in range(8)])
    for row in range(200):
        if not amb[row]:
            exact = pr.incircle_exact(*pts[row])
            assert np.sign(det[row]) == exact


def test_circumcenter_exact():
    cx, cy = pr.circumcenter_exact((0.0, 0.0), (2.0, 0.0), (0.0, 2.0))
    assert (cx, cy) == (1, 1)


def test_segment_hits_rect_exact():
    rect = (0.0, 0.0, 1.0, 1.0)
    assert pr.segment_hits_rect_exact((-1.0, 0.5), (2.0, 0.5), rect)
    assert pr.segment_hits_rect_exact((1.0, 1.0), (2.0, 2.0), rect)  # corner touch
    assert not pr.segment_hits_rect_exact((1.5, 1.5), (2.0, 2.0), rect)


def test_cell_segment_interval_exact_closed():
    # cell of the origin vs neighbor at (2, 0): bisector x = 1
    site = (0.0, 0.0)
    nbrs = [(2.0, 0.0)]
    iv = pr.cell_segment_interval_exact(site, nbrs, (0.0, 0.0), (2.0, 0.0))
    assert iv == (0, 0.5)
    # segment entirely on the far side, touching the bisector at its start
    iv2 = pr.cell_segment_interval_exact(site, nbrs, (1.0, 0.0), (2.0, 0.0))
    assert iv2 == (0, 0)          # closed-cell: boundary point belongs to both
    assert pr.cell_segment_interval_exact(site, nbrs, (1.5, 0.0), (2.0, 0.0)) is None
