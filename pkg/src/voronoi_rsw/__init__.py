"""Monte Carlo laboratory for planar Voronoi percolation.

Samples Poisson-Voronoi tilings on certified windows, decides crossing,
circuit, arm and landing-zone events exactly on each configuration, and
estimates their probabilities with reproducible parallel Monte Carlo.
"""

__version__ = "0.1.0"

from .geom import (
    Rect,
    SquareAnnulus,
    Segment,
    PointSample,
    Triangulation,
    sample_poisson,
    extend_sample,
    delaunay,
    nearest_site,
    max_nearest_distance,
    determinism_certificate,
    default_margin,
)
from .streams import Stream, derive_stream

__all__ = [
    "Rect",
    "SquareAnnulus",
    "Segment",
    "PointSample",
    "Triangulation",
    "sample_poisson",
    "extend_sample",
    "delaunay",
    "nearest_site",
    "max_nearest_distance",
    "determinism_certificate",
    "default_margin",
    "Stream",
    "derive_stream",
    "__version__",
]
