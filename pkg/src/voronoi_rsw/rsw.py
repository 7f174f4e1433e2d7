"""Estimators for the box-crossing machinery built on the event deciders.

Covers the landing-zone balance curve phi and its calibrated quantile,
good-scale scans, the standard circuit/crossing inequalities, a
quasi-independence probe over a fixed documented event family, one-arm
decay fits, and crossing-probability tables.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .events import Circuit, Crossing, EventSpec, HEvent, XEvent, OneArm
from .geom import Rect, SquareAnnulus, default_margin
from .mc import (
    Estimate,
    JointEstimate,
    TrialPlan,
    TrialProgram,
    WindowPlan,
    run_program,
    run_trials,
)
from .streams import subseed

__all__ = [
    "PhiPoint",
    "PhiCurve",
    "AlphaHat",
    "ScanReport",
    "CorollaryReport",
    "QIReport",
    "ArmDecayReport",
    "FsTable",
    "phi_curve",
    "alpha_hat",
    "good_scale_scan",
    "corollary_suite",
    "quasi_independence_probe",
    "covariance_probe_value",
    "arm_decay_fit",
    "fs_table",
]


# ---------------------------------------------------------------------------
# phi and alpha


@dataclass(frozen=True)
class PhiPoint:
    """Paired estimate of phi_s(alpha) = P[H(0,alpha)] - P[H(alpha, s/2)]."""

    alpha: float
    n: int
    value: float
    sigma: float
    ci: tuple[float, float]


@dataclass(frozen=True)
class PhiCurve:
    s: float
    p: float
    intensity: float
    points: tuple[PhiPoint, ...]
    master_seed: int
    shared_samples: bool = True

    @property
    def grid(self) -> tuple[float, ...]:
        return tuple(pt.alpha for pt in self.points)


def _phi_program(s: float, grid, p: float, intensity: float) -> TrialProgram:
    h = s / 2.0
    box = Rect(-h, -h, h, h)
    windows = (WindowPlan(base=box, margin=default_margin(intensity),
                          certify=(box,)),)
    evs = []
    for alpha in grid:
        evs.append((0, HEvent(s=s, alpha=0.0, beta=alpha, p=p, intensity=intensity)))
        evs.append((0, HEvent(s=s, alpha=alpha, beta=h, p=p, intensity=intensity)))
    return TrialProgram(windows=windows, events=tuple(evs), p=p, intensity=intensity)


def phi_curve(s: float, grid, plan: TrialPlan, master_seed: int,
              p: float = 0.5, intensity: float = 1.0) -> PhiCurve:
    """Estimate phi_s on a grid of alpha values with paired samples.

    Both H events per alpha (and all grid points) are decided on the same
    configurations, which kills most of the variance of the difference and
    makes the per-sample monotonicity in alpha exact.
    """
    grid = [float(a) for a in grid]
    if not grid:
        raise ValueError("empty alpha grid")
    if any(not (0.0 <= a <= s / 2.0) for a in grid):
        raise ValueError(f"alpha grid escapes [0, s/2] for s={s}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("alpha grid must be strictly increasing")
    je = run_program(_phi_program(s, grid, p, intensity), plan, master_seed)
    pts = []
    for i, alpha in enumerate(grid):
        d, sig = je.diff_estimate(2 * i, 2 * i + 1)
        ci = (d - plan.z * sig, d + plan.z * sig)
        pts.append(PhiPoint(alpha=alpha, n=je.n, value=d, sigma=sig, ci=ci))
    return PhiCurve(s=s, p=p, intensity=intensity, points=tuple(pts),
                    master_seed=master_seed)


@dataclass(frozen=True)
class AlphaHat:
    """Bisection-located solution of phi_s(alpha) = c0/4, clipped at s/4."""

    s: float
    c0: float
    value: float
    bracket: tuple[float, float]
    clipped: bool
    inconclusive: bool
    evaluations: tuple[PhiPoint, ...]
    master_seed: int


def alpha_hat(s: float, c0: float, plan: TrialPlan, master_seed: int,
              p: float = 0.5, intensity: float = 1.0,
              tol: float | None = None) -> AlphaHat:
    """Locate alpha_s = min(phi_s^{-1}(c0/4), s/4) by monotone bisection.

    All evaluations reuse the same master seed, so they share positions and
    colors trial-by-trial and the bracket invariant is exact per sample.
    Stops when the bracket is narrower than s/128 (or `tol`); if the CI at a
    midpoint cannot separate from the target within the plan's budget the
    result is flagged inconclusive instead of silently resolved.
    """
    if not (0.0 < c0 <= 1.0):
        raise ValueError(f"c0 must lie in (0, 1], got {c0}")
    target = c0 / 4.0
    tol = s / 128.0 if tol is None else tol
    evals = []

    def phi_at(alpha: float) -> PhiPoint:
        pc = phi_curve(s, [alpha], plan, master_seed, p=p, intensity=intensity)
        pt = pc.points[0]
        evals.append(pt)
        return pt

    top = phi_at(s / 4.0)
    if top.ci[1] < target:
        return AlphaHat(s=s, c0=c0, value=s / 4.0, bracket=(s / 4.0, s / 4.0),
                        clipped=True, inconclusive=False, evaluations=tuple(evals),
                        master_seed=master_seed)
    if top.ci[0] <= target:
        # cannot even resolve the clip decision
        return AlphaHat(s=s, c0=c0, value=s / 4.0, bracket=(0.0, s / 4.0),
                        clipped=False, inconclusive=True, evaluations=tuple(evals),
                        master_seed=master_seed)

    lo, hi = 0.0, s / 4.0
    inconclusive = False
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        pt = phi_at(mid)
        if pt.ci[1] < target:
            lo = mid
        elif pt.ci[0] > target:
            hi = mid
        else:
            inconclusive = True
            break
    return AlphaHat(s=s, c0=c0, value=0.5 * (lo + hi), bracket=(lo, hi),
                    clipped=False, inconclusive=inconclusive,
                    evaluations=tuple(evals), master_seed=master_seed)


# ---------------------------------------------------------------------------
# good scales


@dataclass(frozen=True)
class ScanReport:
    scales: tuple[float, ...]
    alpha_s: tuple[AlphaHat, ...]
    alpha_two_thirds: tuple[AlphaHat, ...]
    good: tuple[bool, ...]
    circuits: tuple[Estimate, ...]
    c0: float
    master_seed: int

    def rows(self):
        out = []
        for i, s in enumerate(self.scales):
            out.append({
                "s": s,
                "alpha_s": self.alpha_s[i].value,
                "alpha_s_inconclusive": self.alpha_s[i].inconclusive,
                "alpha_2s3": self.alpha_two_thirds[i].value,
                "alpha_2s3_inconclusive": self.alpha_two_thirds[i].inconclusive,
                "good": self.good[i],
                "circuit_p_hat": self.circuits[i].p_hat,
                "circuit_ci_lo": self.circuits[i].ci[0],
                "circuit_ci_hi": self.circuits[i].ci[1],
            })
        return out


def good_scale_scan(scales, c0: float, plan: TrialPlan, master_seed: int,
                    p: float = 0.5, intensity: float = 1.0) -> ScanReport:
    """Flag scales with alpha_s <= 2*alpha_{2s/3} and measure the circuit
    probability P[circuit in A_{s,2s}] at every scale."""
    scales = [float(s) for s in scales]
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly increasing")
    ah_s, ah_23, good, circ = [], [], [], []
    for s in scales:
        a1 = alpha_hat(s, c0, plan, subseed(master_seed, f"alpha/s={s:g}"),
                       p=p, intensity=intensity)
        a2 = alpha_hat(2.0 * s / 3.0, c0, plan,
                       subseed(master_seed, f"alpha/s={2.0 * s / 3.0:g}"),
                       p=p, intensity=intensity)
        ah_s.append(a1)
        ah_23.append(a2)
        good.append(a1.value <= 2.0 * a2.value)
        spec = Circuit(a=s, b=2.0 * s, p=p, intensity=intensity)
        circ.append(run_trials(spec, plan, subseed(master_seed, f"circuit/s={s:g}")))
    return ScanReport(scales=tuple(scales), alpha_s=tuple(ah_s),
                      alpha_two_thirds=tuple(ah_23), good=tuple(good),
                      circuits=tuple(circ), c0=c0, master_seed=master_seed)


# ---------------------------------------------------------------------------
# corollary inequalities


@dataclass(frozen=True)
class CorollaryCheck:
    name: str
    lhs: float
    rhs: float
    slack_sigma: float
    passed: bool


@dataclass(frozen=True)
class CorollaryReport:
    s: float
    p: float
    estimates: dict
    checks: tuple[CorollaryCheck, ...]
    master_seed: int

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def corollary_suite(s: float, plan: TrialPlan, master_seed: int,
                    p: float = 0.5, intensity: float = 1.0,
                    kappa: float = 1.0, i_pow: int = 2) -> CorollaryReport:
    """Check the standard positive-association inequalities as
    estimate-with-slack statements (LHS >= RHS - 3 sigma).

    With kappa=1, i=2 the chain inequality reads f(3) >= f(2)^2 f(1).
    The square-root trick is exercised with k=2 half-side landing zones of
    the left-right crossing of B_{s/2}.
    """
    h = s / 2.0
    dm = default_margin(intensity)
    rho_chain = 1.0 + i_pow * kappa

    def box(rho):
        return Rect(0.0, 0.0, rho * s, s)

    ann = SquareAnnulus(s, 2.0 * s)
    hbox = Rect(-h, -h, h, h)
    windows = (
        WindowPlan(box(1.0), dm, (box(1.0),)),
        WindowPlan(box(1.0 + kappa), dm, (box(1.0 + kappa),)),
        WindowPlan(box(rho_chain), dm, (box(rho_chain),)),
        WindowPlan(box(4.0), dm, (box(4.0),)),
        WindowPlan(ann, dm, (ann,)),
        WindowPlan(hbox, dm, (hbox,)),
    )
    mk = dict(p=p, intensity=intensity)
    evs = (
        (0, Crossing(rho=1.0, s=s, **mk)),
        (1, Crossing(rho=1.0 + kappa, s=s, **mk)),
        (2, Crossing(rho=rho_chain, s=s, **mk)),
        (3, Crossing(rho=4.0, s=s, **mk)),
        (4, Circuit(a=s, b=2.0 * s, **mk)),
        (5, HEvent(s=s, alpha=-h, beta=h, **mk)),   # E = E1 ∪ E2
        (5, HEvent(s=s, alpha=0.0, beta=h, **mk)),  # E1: upper landing zone
        (5, HEvent(s=s, alpha=-h, beta=0.0, **mk)),  # E2: lower landing zone
    )
    program = TrialProgram(windows=windows, events=evs, p=p, intensity=intensity)
    je = run_program(program, plan, master_seed)
    f1, f2, f3, f4, A, E, E1, E2 = (je.marginal(i) for i in range(8))

    checks = []

    def add(name, lhs, rhs, sigma):
        checks.append(CorollaryCheck(name=name, lhs=lhs, rhs=rhs,
                                     slack_sigma=sigma,
                                     passed=lhs >= rhs - 3.0 * sigma))

    add(f"f({1 + kappa:g}) >= P[circuit]", f2.p_hat, A.p_hat,
        math.hypot(f2.sigma, A.sigma))

    rhs_chain = f2.p_hat ** i_pow * f1.p_hat
    sig_chain = math.sqrt(
        (i_pow * f2.p_hat ** (i_pow - 1) * f1.p_hat * f2.sigma) ** 2
        + (f2.p_hat ** i_pow * f1.sigma) ** 2)
    add(f"f({rho_chain:g}) >= f({1 + kappa:g})^{i_pow} f(1)", f3.p_hat, rhs_chain,
        math.hypot(f3.sigma, sig_chain))

    rhs_circ = f4.p_hat ** 4
    sig_circ = 4.0 * f4.p_hat ** 3 * f4.sigma
    add("P[circuit] >= f(4)^4", A.p_hat, rhs_circ, math.hypot(A.sigma, sig_circ))

    lhs_sqrt = max(E1.p_hat, E2.p_hat)
    lhs_sig = E1.sigma if E1.p_hat >= E2.p_hat else E2.sigma
    rhs_sqrt = 1.0 - math.sqrt(max(1.0 - E.p_hat, 0.0))
    sig_sqrt = 0.5 / math.sqrt(max(1.0 - E.p_hat, 1e-12)) * E.sigma
    add("sqrt trick k=2", lhs_sqrt, rhs_sqrt, math.hypot(lhs_sig, sig_sqrt))

    return CorollaryReport(
        s=s, p=p,
        estimates={"f1": f1, "f2": f2, "f3": f3, "f4": f4, "circuit": A,
                   "E": E, "E1": E1, "E2": E2},
        checks=tuple(checks), master_seed=master_seed)


# ---------------------------------------------------------------------------
# quasi-independence probe


@dataclass(frozen=True)
class QIPair:
    name: str
    p_a: float
    p_b: float
    p_ab: float
    covariance: float
    sigma: float


@dataclass(frozen=True)
class QIReport:
    s: float
    p: float
    n: int
    pairs: tuple[QIPair, ...]
    value: float
    master_seed: int
    note: str


def covariance_probe_value(n: int, k_a, k_b, k_ab) -> float:
    """max |P(A∩B) - P(A)P(B)| over paired count triples (harness self-test)."""
    vals = []
    for ka, kb, kab in zip(np.atleast_1d(k_a), np.atleast_1d(k_b), np.atleast_1d(k_ab)):
        vals.append(abs(kab / n - (ka / n) * (kb / n)))
    return float(max(vals))


def quasi_independence_probe(s: float, plan: TrialPlan, master_seed: int,
                             p: float = 0.5, intensity: float = 1.0) -> QIReport:
    """Empirical dependence between annulus and far-field events.

    Fixed documented family: A = black circuit in A_{2s,4s}, paired with
    B1 = black left-right crossing of B_{s/2} and B2 = black circuit in
    A_{6s,8s}.  A and B1 share one solid sampling window B_{4s} (padded), so
    their genuine dependence through sites between the regions is present in
    the simulation.  B2 lives on its own annular window when the two windows
    are disjoint; the suppressed residual dependence is bounded by the
    certificate failure probability, far below Monte Carlo resolution.
    """
    if not (s >= 2):
        raise ValueError(f"probe needs s >= 2, got s={s}")
    dm = default_margin(intensity)
    h = s / 2.0
    inner_ann = SquareAnnulus(2.0 * s, 4.0 * s)
    far_ann = SquareAnnulus(6.0 * s, 8.0 * s)
    hbox = Rect(-h, -h, h, h)
    mk = dict(p=p, intensity=intensity)
    A = Circuit(a=2.0 * s, b=4.0 * s, **mk)
    B1 = HEvent(s=s, alpha=-h, beta=h, **mk)
    B2 = Circuit(a=6.0 * s, b=8.0 * s, **mk)

    solid = Rect(-4.0 * s, -4.0 * s, 4.0 * s, 4.0 * s)
    if 6.0 * s - dm >= 4.0 * s + dm:
        windows = (WindowPlan(solid, dm, (inner_ann, hbox)),
                   WindowPlan(far_ann, dm, (far_ann,)))
        wmap = (0, 0, 1)
        note = ("A,B1 on one solid window (joint law); B2 on a disjoint "
                "annular window (residual dependence below the certificate "
                "failure tail)")
    else:
        big = Rect(-8.0 * s, -8.0 * s, 8.0 * s, 8.0 * s)
        windows = (WindowPlan(big, dm, (inner_ann, hbox, far_ann)),)
        wmap = (0, 0, 0)
        note = "single solid window (joint law for the whole family)"

    program = TrialProgram(windows=windows,
                           events=((wmap[0], A), (wmap[1], B1), (wmap[2], B2)),
                           p=p, intensity=intensity)
    je = run_program(program, plan, master_seed)
    n = je.n
    pairs = []
    for j, name in ((1, "circuit(2s,4s) vs crossing(B_{s/2})"),
                    (2, "circuit(2s,4s) vs circuit(6s,8s)")):
        pa = je.joint[0, 0] / n
        pb = je.joint[j, j] / n
        pab = je.joint[0, j] / n
        cov = pab - pa * pb
        sig = math.sqrt(max(pa * (1 - pa) * pb * (1 - pb), 1.0 / n) / n)
        pairs.append(QIPair(name=name, p_a=pa, p_b=pb, p_ab=pab,
                            covariance=cov, sigma=sig))
    value = max(abs(q.covariance) for q in pairs)
    return QIReport(s=s, p=p, n=n, pairs=tuple(pairs), value=value,
                    master_seed=master_seed, note=note)


# ---------------------------------------------------------------------------
# one-arm decay


@dataclass(frozen=True)
class ArmDecayReport:
    s0: float
    t_values: tuple[float, ...]
    estimates: tuple[Estimate, ...]
    eta_hat: float
    dropped: tuple[float, ...]
    master_seed: int


def arm_decay_fit(s0: float, t_list, plan: TrialPlan, master_seed: int,
                  p: float = 0.5, intensity: float = 1.0) -> ArmDecayReport:
    """Fit pi_1(s0, t) ~ (s0/t)^eta by least squares on log-log points."""
    t_list = [float(t) for t in t_list]
    if any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise ValueError("t_list must be strictly increasing")
    if any(t <= s0 for t in t_list):
        raise ValueError("all t must exceed s0")
    ests, kept_t, dropped = [], [], []
    for t in t_list:
        est = run_trials(OneArm(s=s0, t=t, p=p, intensity=intensity), plan,
                         subseed(master_seed, f"arm/t={t:g}"))
        if est.k == 0:
            warnings.warn(f"one-arm estimate at t={t} is zero; point dropped")
            dropped.append(t)
        else:
            ests.append(est)
            kept_t.append(t)
    if not ests:
        raise ValueError("no nonzero one-arm probabilities; nothing to fit")
    x = np.log(np.array([s0 / t for t in kept_t]))
    y = np.log(np.array([e.p_hat for e in ests]))
    eta = float(np.polyfit(x, y, 1)[0]) if len(ests) >= 2 else float("nan")
    return ArmDecayReport(s0=s0, t_values=tuple(kept_t), estimates=tuple(ests),
                          eta_hat=eta, dropped=tuple(dropped),
                          master_seed=master_seed)


# ---------------------------------------------------------------------------
# crossing tables


@dataclass(frozen=True)
class FsTable:
    rho_values: tuple[float, ...]
    s_values: tuple[float, ...]
    p: float
    estimates: dict        # (rho, s) -> Estimate
    master_seed: int

    def rows(self):
        out = []
        for s in self.s_values:
            for rho in self.rho_values:
                e = self.estimates[(rho, s)]
                out.append({"rho": rho, "s": s, "n": e.n, "k": e.k,
                            "p_hat": e.p_hat, "ci_lo": e.ci[0], "ci_hi": e.ci[1]})
        return out


def fs_table(rho_list, s_list, p: float, plan: TrialPlan, master_seed: int,
             intensity: float = 1.0) -> FsTable:
    """Crossing probability grid; at fixed s all aspect ratios share samples
    on one window, so the decrease in rho is exact per sample."""
    rho_list = sorted(float(r) for r in rho_list)
    s_list = [float(s) for s in s_list]
    dm = default_margin(intensity)
    estimates = {}
    for s in s_list:
        big = Rect(0.0, 0.0, rho_list[-1] * s, s)
        regions = tuple(Rect(0.0, 0.0, rho * s, s) for rho in rho_list)
        windows = (WindowPlan(big, dm, regions),)
        evs = tuple((0, Crossing(rho=rho, s=s, p=p, intensity=intensity))
                    for rho in rho_list)
        program = TrialProgram(windows=windows, events=evs, p=p, intensity=intensity)
        je = run_program(program, plan, subseed(master_seed, f"fs/s={s:g}"))
        for i, rho in enumerate(rho_list):
            estimates[(rho, s)] = je.marginal(i)
    return FsTable(rho_values=tuple(rho_list), s_values=tuple(s_list), p=p,
                   estimates=estimates, master_seed=master_seed)
