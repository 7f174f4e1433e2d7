"""Exact deciders for crossing, landing-zone, circuit, arm and fill events.

Every decider is a pure function of an immutable ColoredTiling and reports
the exact truth of the event on that configuration.  Event spec dataclasses
bundle the decider with its scale and model parameters so Monte Carlo
drivers can ship them to worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import Rect, Region, Segment, SquareAnnulus, max_nearest_distance
from .tiling import BLACK, WHITE, ColoredTiling, GraphCache, connected

__all__ = [
    "EventSpec",
    "Crossing",
    "HEvent",
    "XEvent",
    "Circuit",
    "OneArm",
    "FEvent",
    "crossing",
    "h_event",
    "x_event",
    "circuit",
    "one_arm",
    "f_event",
]


def _check_color(color: str):
    if color not in (BLACK, WHITE):
        raise ValueError(f"color must be 'black' or 'white', got {color!r}")


def crossing(tiling: ColoredTiling, rho: float, s: float, color: str = BLACK,
             direction: str = "horizontal", cache: GraphCache | None = None) -> bool:
    """Side-to-side crossing of the rectangle [0, rho*s] x [0, s].

    direction 'horizontal' joins the left and right sides, 'vertical' the
    bottom and top.
    """
    if not (rho > 0 and s > 0):
        raise ValueError(f"need rho > 0 and s > 0, got rho={rho}, s={s}")
    _check_color(color)
    if direction not in ("horizontal", "vertical"):
        raise ValueError(f"direction must be horizontal|vertical, got {direction!r}")
    if tiling.n == 0:
        return False
    cache = cache or GraphCache(tiling)
    g = cache.graph(Rect(0.0, 0.0, rho * s, s), color)
    a, b = ("left", "right") if direction == "horizontal" else ("bottom", "top")
    return connected(g, a, b)


def h_event(tiling: ColoredTiling, s: float, alpha: float, beta: float,
            cache: GraphCache | None = None) -> bool:
    """Black path in B_{s/2} from the left side to {s/2} x [alpha, beta]."""
    h = s / 2.0
    if not (-h <= alpha <= beta <= h):
        raise ValueError(
            f"need -s/2 <= alpha <= beta <= s/2, got alpha={alpha}, beta={beta}, s={s}")
    if tiling.n == 0:
        return False
    cache = cache or GraphCache(tiling)
    box = Rect(-h, -h, h, h)
    g = cache.graph(box, BLACK)
    target = cache.components_touching(g, Segment((h, alpha), (h, beta)))
    if not target:
        return False
    return bool(g.contact_components("left") & target)


def x_event(tiling: ColoredTiling, s: float, alpha: float,
            cache: GraphCache | None = None) -> bool:
    """One black component of B_{s/2} touching the four segments
    {±s/2} x [-s/2, -alpha] and {±s/2} x [alpha, s/2].

    Equivalent to the three-path form: the two side-to-side arcs and their
    connector merge into a single component, and conversely a component
    touching all four segments contains all three paths.
    """
    h = s / 2.0
    if not (0.0 <= alpha <= h):
        raise ValueError(f"need 0 <= alpha <= s/2, got alpha={alpha}, s={s}")
    if tiling.n == 0:
        return False
    cache = cache or GraphCache(tiling)
    box = Rect(-h, -h, h, h)
    g = cache.graph(box, BLACK)
    segs = [Segment((-h, -h), (-h, -alpha)), Segment((-h, alpha), (-h, h)),
            Segment((h, -h), (h, -alpha)), Segment((h, alpha), (h, h))]
    acc: set[int] | None = None
    for seg in segs:
        comp = cache.components_touching(g, seg)
        acc = comp if acc is None else acc & comp
        if not acc:
            return False
    return bool(acc)


def circuit(tiling: ColoredTiling, a: float, b: float, color: str = BLACK,
            cache: GraphCache | None = None) -> bool:
    """Circuit of the given color in the closed annulus A_{a,b} surrounding
    the hole.

    Decided by continuum duality under the closed-cell convention: the
    circuit exists iff no opposite-color component of the annulus joins the
    inner boundary to the outer boundary.
    """
    if not (0 < a < b):
        raise ValueError(f"need 0 < a < b, got a={a}, b={b}")
    _check_color(color)
    if tiling.n == 0:
        return False
    cache = cache or GraphCache(tiling)
    dual = WHITE if color == BLACK else BLACK
    g = cache.graph(SquareAnnulus(a, b), dual)
    return not connected(g, "inner", "outer")


def one_arm(tiling: ColoredTiling, s: float, t: float,
            cache: GraphCache | None = None) -> bool:
    """Black path from B_s to the boundary of B_t (s < t)."""
    if not (1.0 <= s < t):
        raise ValueError(f"need 1 <= s < t, got s={s}, t={t}")
    if tiling.n == 0:
        return False
    cache = cache or GraphCache(tiling)
    box = Rect(-t, -t, t, t)
    g = cache.graph(box, BLACK)
    inner = cache.components_touching(g, Rect(-s, -s, s, s))
    if not inner:
        return False
    outer: set[int] = set()
    for name in ("left", "right", "bottom", "top"):
        outer |= g.contact_components(name)
    return bool(inner & outer)


def f_event(tiling: ColoredTiling, s: float) -> bool:
    """Every point of A_{2s,4s} has a site within distance s (strictly).

    Exact provided the sampled territory extends at least s beyond the
    annulus: extra sites can only shrink nearest distances, so a computed
    maximum below s is final, and with margin >= s no unsampled site can
    undercut a computed maximum at or above s.
    """
    if not (s > 0):
        raise ValueError(f"need s > 0, got s={s}")
    if tiling.n == 0:
        return False
    ann = SquareAnnulus(2.0 * s, 4.0 * s)
    return max_nearest_distance(tiling.sample, ann, tri=tiling.tri) < s


# ---------------------------------------------------------------------------
# event specs (picklable descriptions consumed by the Monte Carlo driver)


@dataclass(frozen=True)
class EventWindow:
    """Sampling prescription: dilate `base` by `margin` and certify `certify`."""

    base: Region
    margin: float | None = None          # None -> default 4 / sqrt(intensity)
    certify: tuple[Region, ...] = ()


@dataclass(frozen=True, kw_only=True)
class EventSpec:
    """Base of all event descriptions; carries the model parameters."""

    p: float
    intensity: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not (self.intensity > 0):
            raise ValueError(f"intensity must be positive, got {self.intensity}")

    def window(self) -> EventWindow:
        raise NotImplementedError

    def decide(self, tiling: ColoredTiling, cache: GraphCache | None = None) -> bool:
        raise NotImplementedError

    def label(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True, kw_only=True)
class Crossing(EventSpec):
    rho: float
    s: float
    color: str = BLACK
    direction: str = "horizontal"

    def __post_init__(self):
        super().__post_init__()
        if not (self.rho > 0 and self.s > 0):
            raise ValueError("need rho > 0 and s > 0")
        _check_color(self.color)
        if self.direction not in ("horizontal", "vertical"):
            raise ValueError(f"bad direction {self.direction!r}")

    def window(self) -> EventWindow:
        box = Rect(0.0, 0.0, self.rho * self.s, self.s)
        return EventWindow(base=box, certify=(box,))

    def decide(self, tiling, cache=None) -> bool:
        return crossing(tiling, self.rho, self.s, self.color, self.direction, cache)

    def label(self) -> str:
        return f"crossing(rho={self.rho:g},s={self.s:g},{self.color},{self.direction})"


@dataclass(frozen=True, kw_only=True)
class HEvent(EventSpec):
    s: float
    alpha: float
    beta: float

    def __post_init__(self):
        super().__post_init__()
        h = self.s / 2.0
        if not (-h <= self.alpha <= self.beta <= h):
            raise ValueError("need -s/2 <= alpha <= beta <= s/2")

    def window(self) -> EventWindow:
        h = self.s / 2.0
        box = Rect(-h, -h, h, h)
        return EventWindow(base=box, certify=(box,))

    def decide(self, tiling, cache=None) -> bool:
        return h_event(tiling, self.s, self.alpha, self.beta, cache)

    def label(self) -> str:
        return f"H(s={self.s:g},alpha={self.alpha:g},beta={self.beta:g})"


@dataclass(frozen=True, kw_only=True)
class XEvent(EventSpec):
    s: float
    alpha: float

    def __post_init__(self):
        super().__post_init__()
        if not (0.0 <= self.alpha <= self.s / 2.0):
            raise ValueError("need 0 <= alpha <= s/2")

    def window(self) -> EventWindow:
        h = self.s / 2.0
        box = Rect(-h, -h, h, h)
        return EventWindow(base=box, certify=(box,))

    def decide(self, tiling, cache=None) -> bool:
        return x_event(tiling, self.s, self.alpha, cache)

    def label(self) -> str:
        return f"X(s={self.s:g},alpha={self.alpha:g})"


@dataclass(frozen=True, kw_only=True)
class Circuit(EventSpec):
    a: float
    b: float
    color: str = BLACK

    def __post_init__(self):
        super().__post_init__()
        if not (0 < self.a < self.b):
            raise ValueError("need 0 < a < b")
        _check_color(self.color)

    def window(self) -> EventWindow:
        ann = SquareAnnulus(self.a, self.b)
        return EventWindow(base=ann, certify=(ann,))

    def decide(self, tiling, cache=None) -> bool:
        return circuit(tiling, self.a, self.b, self.color, cache)

    def label(self) -> str:
        return f"circuit(a={self.a:g},b={self.b:g},{self.color})"


@dataclass(frozen=True, kw_only=True)
class OneArm(EventSpec):
    s: float
    t: float

    def __post_init__(self):
        super().__post_init__()
        if not (1.0 <= self.s < self.t):
            raise ValueError("need 1 <= s < t")

    def window(self) -> EventWindow:
        box = Rect(-self.t, -self.t, self.t, self.t)
        return EventWindow(base=box, certify=(box,))

    def decide(self, tiling, cache=None) -> bool:
        return one_arm(tiling, self.s, self.t, cache)

    def label(self) -> str:
        return f"one_arm(s={self.s:g},t={self.t:g})"


@dataclass(frozen=True, kw_only=True)
class FEvent(EventSpec):
    s: float

    def __post_init__(self):
        super().__post_init__()
        if not (self.s > 0):
            raise ValueError("need s > 0")

    def window(self) -> EventWindow:
        ann = SquareAnnulus(2.0 * self.s, 4.0 * self.s)
        # margin s makes the decision exact without a standard certificate
        return EventWindow(base=ann, margin=self.s, certify=())

    def decide(self, tiling, cache=None) -> bool:
        return f_event(tiling, self.s)

    def label(self) -> str:
        return f"F(s={self.s:g})"
