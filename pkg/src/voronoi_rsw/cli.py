"""Command-line experiment runner.

Subcommands estimate, sweep, phi, alpha, scan, arm and qi drive the Monte
Carlo estimators and append CSV rows plus a JSONL run log; verify runs the
invariant suites; plot renders CSV columns to a self-contained SVG.  Exit
codes: 0 ok, 1 check/estimation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .events import Circuit, Crossing, FEvent, HEvent, OneArm, XEvent
from .geom import Rect, SquareAnnulus
from .mc import AbortStorm, Estimate, TrialPlan, run_trials
from .streams import subseed
from . import rsw

_EVENT_KINDS = ("crossing", "h", "x", "circuit", "one-arm", "f")


def _threads_default(value):
    if value is not None:
        return int(value)
    env = os.environ.get("VORONOI_RSW_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def build_event(cfg) -> object:
    kind = cfg.get("event")
    mk = dict(p=cfg["p"], intensity=cfg.get("intensity", 1.0))
    try:
        if kind == "crossing":
            return Crossing(rho=cfg["rho"], s=cfg["s"], color=cfg.get("color", "black"),
                            direction=cfg.get("direction", "horizontal"), **mk)
        if kind == "h":
            return HEvent(s=cfg["s"], alpha=cfg["alpha"], beta=cfg["beta"], **mk)
        if kind == "x":
            return XEvent(s=cfg["s"], alpha=cfg["alpha"], **mk)
        if kind == "circuit":
            return Circuit(a=cfg["a"], b=cfg["b"], color=cfg.get("color", "black"), **mk)
        if kind == "one-arm":
            return OneArm(s=cfg["s"], t=cfg["t"], **mk)
        if kind == "f":
            return FEvent(s=cfg["s"], **mk)
    except (KeyError, TypeError) as exc:
        raise SystemExit(f"error: incomplete parameters for event {kind!r}: {exc}")
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    raise SystemExit(f"error: unknown event kind {kind!r} (choose from {_EVENT_KINDS})")


def _plan(cfg) -> TrialPlan:
    try:
        return TrialPlan(n_max=int(cfg["n_max"]),
                         ci_target=float(cfg.get("ci_target", 0.0)),
                         z=float(cfg.get("confidence", 1.96)),
                         workers=_threads_default(cfg.get("threads")))
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")


ESTIMATE_COLUMNS = ["timestamp", "event", "params", "p", "intensity", "n", "k",
                    "p_hat", "ci_lo", "ci_hi", "seed", "aborts"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def append_csv(path, columns, rows):
    exists = os.path.exists(path) and os.path.getsize(path) > 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if not exists:
            w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


def append_log(path, record):
    if not path:
        return
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record) + "\n")


def estimate_row(est: Estimate, spec, cfg) -> dict:
    return {
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "event": cfg["event"],
        "params": spec.label(),
        "p": spec.p,
        "intensity": spec.intensity,
        "n": est.n,
        "k": est.k,
        "p_hat": est.p_hat,
        "ci_lo": est.ci[0],
        "ci_hi": est.ci[1],
        "seed": est.master_seed,
        "aborts": est.aborted_trials,
    }


def cmd_estimate(cfg) -> int:
    spec = build_event(cfg)
    plan = _plan(cfg)
    try:
        est = run_trials(spec, plan, int(cfg["seed"]),
                         checkpoint_path=cfg.get("checkpoint"))
    except AbortStorm as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    row = estimate_row(est, spec, cfg)
    line = ",".join(_fmt(row[c]) for c in ESTIMATE_COLUMNS)
    print(",".join(ESTIMATE_COLUMNS))
    print(line)
    if cfg.get("csv"):
        append_csv(cfg["csv"], ESTIMATE_COLUMNS, [row])
    append_log(cfg.get("log"), {"cmd": "estimate", "version": __version__,
                                "config": cfg, "result": row})
    return 0


def cmd_sweep(cfg) -> int:
    param = cfg.get("sweep_param")
    values = cfg.get("sweep_values")
    if not param or not values:
        raise SystemExit("error: sweep needs --sweep-param and --sweep-values")
    rows = []
    for v in values:
        sub = dict(cfg)
        sub[param] = v
        spec = build_event(sub)
        plan = _plan(sub)
        seed = subseed(int(cfg["seed"]), f"sweep/{param}={v:g}")
        est = run_trials(spec, plan, seed)
        rows.append(estimate_row(est, spec, sub))
    cols = ESTIMATE_COLUMNS
    print(",".join(cols))
    for row in rows:
        print(",".join(_fmt(row[c]) for c in cols))
    if cfg.get("csv"):
        append_csv(cfg["csv"], cols, rows)
    append_log(cfg.get("log"), {"cmd": "sweep", "version": __version__,
                                "config": cfg,
                                "result": [{k: r[k] for k in ("params", "n", "k", "p_hat")}
                                           for r in rows]})
    return 0


def cmd_phi(cfg) -> int:
    grid = cfg.get("grid")
    if not grid:
        raise SystemExit("error: phi needs a nonempty --grid")
    plan = _plan(cfg)
    try:
        curve = rsw.phi_curve(cfg["s"], grid, plan, int(cfg["seed"]),
                              p=cfg["p"], intensity=cfg.get("intensity", 1.0))
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    cols = ["timestamp", "s", "p", "alpha", "n", "phi_hat", "sigma", "ci_lo", "ci_hi", "seed"]
    ts = time.strftime("%Y-%m-%dT%H:%M:%S")
    rows = [{"timestamp": ts, "s": curve.s, "p": curve.p, "alpha": pt.alpha,
             "n": pt.n, "phi_hat": pt.value, "sigma": pt.sigma,
             "ci_lo": pt.ci[0], "ci_hi": pt.ci[1], "seed": curve.master_seed}
            for pt in curve.points]
    print(",".join(cols))
    for row in rows:
        print(",".join(_fmt(row[c]) for c in cols))
    if cfg.get("csv"):
        append_csv(cfg["csv"], cols, rows)
    append_log(cfg.get("log"), {"cmd": "phi", "version": __version__, "config": cfg,
                                "result": [{"alpha": r["alpha"], "phi_hat": r["phi_hat"]}
                                           for r in rows]})
    return 0


def cmd_alpha(cfg) -> int:
    plan = _plan(cfg)
    ah = rsw.alpha_hat(cfg["s"], cfg.get("c0", 0.5), plan, int(cfg["seed"]),
                       p=cfg["p"], intensity=cfg.get("intensity", 1.0))
    cols = ["timestamp", "s", "p", "c0", "alpha_hat", "bracket_lo", "bracket_hi",
            "clipped", "inconclusive", "evaluations", "seed"]
    row = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"), "s": ah.s, "p": cfg["p"],
           "c0": ah.c0, "alpha_hat": ah.value, "bracket_lo": ah.bracket[0],
           "bracket_hi": ah.bracket[1], "clipped": ah.clipped,
           "inconclusive": ah.inconclusive, "evaluations": len(ah.evaluations),
           "seed": ah.master_seed}
    print(",".join(cols))
    print(",".join(_fmt(row[c]) for c in cols))
    if cfg.get("csv"):
        append_csv(cfg["csv"], cols, [row])
    append_log(cfg.get("log"), {"cmd": "alpha", "version": __version__,
                                "config": cfg, "result": row})
    return 0


def cmd_scan(cfg) -> int:
    scales = cfg.get("scales")
    if not scales:
        raise SystemExit("error: scan needs --scales")
    plan = _plan(cfg)
    rep = rsw.good_scale_scan(scales, cfg.get("c0", 0.5), plan, int(cfg["seed"]),
                              p=cfg["p"], intensity=cfg.get("intensity", 1.0))
    cols = ["timestamp", "s", "p", "c0", "alpha_s", "alpha_s_inconclusive",
            "alpha_2s3", "alpha_2s3_inconclusive", "good",
            "circuit_p_hat", "circuit_ci_lo", "circuit_ci_hi", "seed"]
    ts = time.strftime("%Y-%m-%dT%H:%M:%S")
    rows = []
    for r in rep.rows():
        r.update({"timestamp": ts, "p": cfg["p"], "c0": rep.c0, "seed": rep.master_seed})
        rows.append(r)
    print(",".join(cols))
    for row in rows:
        print(",".join(_fmt(row[c]) for c in cols))
    if cfg.get("csv"):
        append_csv(cfg["csv"], cols, rows)
    append_log(cfg.get("log"), {"cmd": "scan", "version": __version__, "config": cfg,
                                "result": [{"s": r["s"], "good": r["good"],
                                            "alpha_s": r["alpha_s"]} for r in rows]})
    return 0


def cmd_arm(cfg) -> int:
    t_values = cfg.get("t_values")
    if not t_values:
        raise SystemExit("error: arm needs --t-values")
    plan = _plan(cfg)
    try:
        rep = rsw.arm_decay_fit(cfg.get("s0", 1.0), t_values, plan, int(cfg["seed"]),
                                p=cfg["p"], intensity=cfg.get("intensity", 1.0))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cols = ["timestamp", "kind", "s0", "p", "t", "n", "k", "p_hat", "ci_lo", "ci_hi",
            "eta_hat", "seed"]
    ts = time.strftime("%Y-%m-%dT%H:%M:%S")
    rows = []
    for t, est in zip(rep.t_values, rep.estimates):
        rows.append({"timestamp": ts, "kind": "point", "s0": rep.s0, "p": cfg["p"],
                     "t": t, "n": est.n, "k": est.k, "p_hat": est.p_hat,
                     "ci_lo": est.ci[0], "ci_hi": est.ci[1], "eta_hat": "",
                     "seed": rep.master_seed})
    rows.append({"timestamp": ts, "kind": "fit", "s0": rep.s0, "p": cfg["p"], "t": "",
                 "n": "", "k": "", "p_hat": "", "ci_lo": "", "ci_hi": "",
                 "eta_hat": rep.eta_hat, "seed": rep.master_seed})
    print(",".join(cols))
    for row in rows:
        print(",".join(_fmt(row[c]) for c in cols))
    if cfg.get("csv"):
        append_csv(cfg["csv"], cols, rows)
    append_log(cfg.get("log"), {"cmd": "arm", "version": __version__, "config": cfg,
                                "result": {"eta_hat": rep.eta_hat,
                                           "dropped": list(rep.dropped)}})
    return 0


def cmd_qi(cfg) -> int:
    plan = _plan(cfg)
    rep = rsw.quasi_independence_probe(cfg["s"], plan, int(cfg["seed"]),
                                       p=cfg["p"], intensity=cfg.get("intensity", 1.0))
    cols = ["timestamp", "s", "p", "pair", "p_a", "p_b", "p_ab", "covariance",
            "sigma", "probe", "seed"]
    ts = time.strftime("%Y-%m-%dT%H:%M:%S")
    rows = [{"timestamp": ts, "s": rep.s, "p": rep.p, "pair": q.name, "p_a": q.p_a,
             "p_b": q.p_b, "p_ab": q.p_ab, "covariance": q.covariance,
             "sigma": q.sigma, "probe": rep.value, "seed": rep.master_seed}
            for q in rep.pairs]
    print(",".join(cols))
    for row in rows:
        print(",".join(_fmt(row[c]) for c in cols))
    if cfg.get("csv"):
        append_csv(cfg["csv"], cols, rows)
    append_log(cfg.get("log"), {"cmd": "qi", "version": __version__, "config": cfg,
                                "result": {"probe": rep.value, "note": rep.note}})
    return 0


# ---------------------------------------------------------------------------
# verify


def _verify_checks(level: str, seed: int, workers: int):
    """Yield (name, passed, detail) for each invariant check."""
    from .mc import TrialProgram, WindowPlan, run_program
    from .geom import delaunay as _delaunay, sample_poisson as _sample
    from .oracle import naive_voronoi, naive_adjacency_pairs
    from .streams import derive_stream
    from .tiling import color_sites as _color

    fast = level == "fast"

    # duality XOR
    n_xor = 400 if fast else 2000
    pvals = (0.5,) if fast else (0.3, 0.5, 0.7)
    viol = 0
    for p in pvals:
        box = Rect(0.0, 0.0, 8.0, 4.0)
        prog = TrialProgram(
            windows=(WindowPlan(box, 4.0, (box,)),),
            events=((0, Crossing(rho=2.0, s=4.0, p=p, color="black",
                                 direction="horizontal")),
                    (0, Crossing(rho=2.0, s=4.0, p=p, color="white",
                                 direction="vertical"))),
            p=p)
        je = run_program(prog, TrialPlan(n_max=n_xor, workers=workers),
                         subseed(seed, f"verify/xor/{p}"))
        both = int(je.joint[0, 1])
        neither = int(je.n - je.joint[0, 0] - je.joint[1, 1] + je.joint[0, 1])
        viol += both + neither
    yield ("duality-xor", viol == 0, f"{viol} violations over {len(pvals)}x{n_xor} samples")

    # oracle equivalence (adjacency)
    n_inst = 12 if fast else 60
    diffs = 0
    for i in range(n_inst):
        st = derive_stream(subseed(seed, "verify/oracle"), i, "pos/0")
        samp = _sample(Rect(0.0, 0.0, 12.0, 12.0), 1.0, st)
        tri = _delaunay(samp)
        ged = set(map(tuple, np.sort(tri.edges, axis=1).tolist()))
        nad = naive_adjacency_pairs(naive_voronoi(samp))
        diffs += ged != nad
    yield ("oracle-adjacency", diffs == 0, f"{diffs} differing instances of {n_inst}")

    # monotone coupling in p
    n_cpl = 60 if fast else 300
    cviol = 0
    box = Rect(0.0, 0.0, 6.0, 6.0)
    for i in range(n_cpl):
        st = derive_stream(subseed(seed, "verify/coupling"), i, "pos/0")
        samp = _sample(box.dilate(4.0), 1.0, st)
        tri = _delaunay(samp)
        prev = None
        for p in (0.2, 0.4, 0.6, 0.8):
            cst = derive_stream(subseed(seed, "verify/coupling"), i, "col/0")
            t = _color(samp, p, cst, tri=tri).with_certified((box,))
            from .events import crossing as _crossing
            cur = _crossing(t, 1.0, 6.0)
            if prev is not None and prev and not cur:
                cviol += 1
            prev = cur
    yield ("monotone-coupling", cviol == 0, f"{cviol} violations over {n_cpl} samples")

    # corollary inequalities
    s = 8.0 if fast else 16.0
    n_cor = 1000 if fast else 10000
    rep = rsw.corollary_suite(s, TrialPlan(n_max=n_cor, workers=workers),
                              subseed(seed, "verify/corollary"))
    for chk in rep.checks:
        yield (f"corollary[{chk.name}]", chk.passed,
               f"lhs={chk.lhs:.4f} rhs={chk.rhs:.4f} sigma={chk.slack_sigma:.4f}")


def cmd_verify(cfg) -> int:
    level = cfg.get("level", "fast")
    if level not in ("fast", "full"):
        raise SystemExit(f"error: level must be fast|full, got {level!r}")
    t0 = time.time()
    failures = 0
    for name, passed, detail in _verify_checks(level, int(cfg["seed"]),
                                               _threads_default(cfg.get("threads"))):
        print(f"{'PASS' if passed else 'FAIL'}  {name:28s} {detail}")
        failures += not passed
    print(f"verify[{level}]: {failures} failure(s), {time.time() - t0:.1f} s")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# plot


def render_svg(xs, ys, lo=None, hi=None, xlabel="x", ylabel="y",
               width=640, height=440):
    """Self-contained SVG 1.1 polyline with optional error bars."""
    ml, mr, mt, mb = 64, 16, 16, 48
    pw, ph = width - ml - mr, height - mt - mb
    allx = list(xs)
    ally = list(ys) + (list(lo) if lo else []) + (list(hi) if hi else [])
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    padx = 0.05 * (x1 - x0)
    pady = 0.08 * (y1 - y0)
    x0, x1 = x0 - padx, x1 + padx
    y0, y1 = y0 - pady, y1 + pady

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + (1.0 - (y - y0) / (y1 - y0)) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
             f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
             f'stroke="black" stroke-width="1"/>']
    for k in range(5):
        xv = x0 + (k + 0.5) * (x1 - x0) / 5
        yv = y0 + (k + 0.5) * (y1 - y0) / 5
        parts.append(f'<line x1="{sx(xv):.1f}" y1="{mt + ph}" x2="{sx(xv):.1f}" '
                     f'y2="{mt + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 20}" text-anchor="middle" '
                     f'font-size="11">{xv:.3g}</text>')
        parts.append(f'<line x1="{ml - 5}" y1="{sy(yv):.1f}" x2="{ml}" '
                     f'y2="{sy(yv):.1f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{sy(yv) + 4:.1f}" text-anchor="end" '
                     f'font-size="11">{yv:.3g}</text>')
    if lo and hi:
        for x, l, h in zip(xs, lo, hi):
            parts.append(f'<line x1="{sx(x):.1f}" y1="{sy(l):.1f}" x2="{sx(x):.1f}" '
                         f'y2="{sy(h):.1f}" stroke="#888" stroke-width="1"/>')
    pline = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{pline}" fill="none" stroke="#1f6fb4" '
                 f'stroke-width="1.5"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" '
                     f'fill="#1f6fb4"/>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
                 f'font-size="13">{xlabel}</text>')
    parts.append(f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'font-size="13" transform="rotate(-90 14 {mt + ph / 2:.1f})">'
                 f'{ylabel}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_plot(cfg) -> int:
    path = cfg.get("csv_in")
    out = cfg.get("svg")
    xcol, ycol = cfg.get("x"), cfg.get("y")
    if not (path and out and xcol and ycol):
        raise SystemExit("error: plot needs --csv-in, --svg, --x and --y")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("error: empty CSV", file=sys.stderr)
        return 1
    for col in (xcol, ycol):
        if col not in rows[0]:
            print(f"error: missing column {col!r} in {path}", file=sys.stderr)
            return 1
    use_ci = cfg.get("ci_lo") in rows[0] and cfg.get("ci_hi") in rows[0] \
        if cfg.get("ci_lo") and cfg.get("ci_hi") else False

    def grab(col):
        out_vals = []
        for r in rows:
            v = r.get(col, "")
            if v == "":
                return None
            out_vals.append(float(v))
        return out_vals

    xs, ys = grab(xcol), grab(ycol)
    if xs is None or ys is None:
        print("error: non-numeric or missing values in plotted columns",
              file=sys.stderr)
        return 1
    lo = grab(cfg["ci_lo"]) if use_ci else None
    hi = grab(cfg["ci_hi"]) if use_ci else None
    svg = render_svg(xs, ys, lo, hi, xlabel=xcol, ylabel=ycol)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip() != ""]


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="voronoi-rsw",
        description="Monte Carlo laboratory for planar Voronoi percolation")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(sp, seeded=True):
        sp.add_argument("--config", help="JSON config file; flags override its fields")
        sp.add_argument("--p", type=float, help="black probability")
        sp.add_argument("--intensity", type=float, help="Poisson intensity (default 1)")
        sp.add_argument("--n-max", dest="n_max", type=int, help="trial budget")
        sp.add_argument("--ci-target", dest="ci_target", type=float,
                        help="stop at this CI halfwidth (0 = run n-max)")
        sp.add_argument("--confidence", type=float, help="z multiplier (default 1.96)")
        sp.add_argument("--threads", type=int,
                        help="workers (default $VORONOI_RSW_THREADS or cores)")
        if seeded:
            sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--csv", help="append result rows to this CSV file")
        sp.add_argument("--log", help="append a JSONL run record to this file")

    sp = sub.add_parser("estimate", help="estimate one event probability")
    common(sp)
    sp.add_argument("--event", choices=_EVENT_KINDS)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--s", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--a", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--t", type=float)
    sp.add_argument("--color", choices=("black", "white"))
    sp.add_argument("--direction", choices=("horizontal", "vertical"))
    sp.add_argument("--checkpoint", help="JSONL checkpoint path (resumable)")

    sp = sub.add_parser("sweep", help="estimate one event over a parameter grid")
    common(sp)
    sp.add_argument("--event", choices=_EVENT_KINDS)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--s", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--a", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--t", type=float)
    sp.add_argument("--color", choices=("black", "white"))
    sp.add_argument("--direction", choices=("horizontal", "vertical"))
    sp.add_argument("--sweep-param", dest="sweep_param",
                    help="name of the swept field (s, rho, p, t, ...)")
    sp.add_argument("--sweep-values", dest="sweep_values", type=_float_list,
                    help="comma-separated values")

    sp = sub.add_parser("phi", help="landing-zone balance curve phi_s on a grid")
    common(sp)
    sp.add_argument("--s", type=float)
    sp.add_argument("--grid", type=_float_list, help="comma-separated alphas")

    sp = sub.add_parser("alpha", help="bisection for alpha_s = phi^{-1}(c0/4) ∧ s/4")
    common(sp)
    sp.add_argument("--s", type=float)
    sp.add_argument("--c0", type=float, help="reference constant (default 0.5)")

    sp = sub.add_parser("scan", help="good-scale scan with circuit probabilities")
    common(sp)
    sp.add_argument("--scales", type=_float_list)
    sp.add_argument("--c0", type=float)

    sp = sub.add_parser("arm", help="one-arm decay fit")
    common(sp)
    sp.add_argument("--s0", type=float, help="inner scale (default 1)")
    sp.add_argument("--t-values", dest="t_values", type=_float_list)

    sp = sub.add_parser("qi", help="quasi-independence probe")
    common(sp)
    sp.add_argument("--s", type=float)

    sp = sub.add_parser("verify", help="run the invariant suites")
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--level", choices=("fast", "full"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)

    sp = sub.add_parser("plot", help="render CSV columns to a standalone SVG")
    sp.add_argument("--csv-in", dest="csv_in")
    sp.add_argument("--svg")
    sp.add_argument("--x")
    sp.add_argument("--y")
    sp.add_argument("--ci-lo", dest="ci_lo", help="lower CI column for error bars")
    sp.add_argument("--ci-hi", dest="ci_hi", help="upper CI column for error bars")
    return ap


_DEFAULTS = {"p": 0.5, "intensity": 1.0, "n_max": 10000, "ci_target": 0.0,
             "confidence": 1.96, "seed": 0, "level": "fast", "s0": 1.0, "c0": 0.5}


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(_DEFAULTS)
    raw = vars(args)
    path = raw.get("config")
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SystemExit(f"error: cannot read config {path}: {exc}")
        if not isinstance(file_cfg, dict):
            raise SystemExit("error: config file must hold a JSON object")
        cfg.update(file_cfg)
    for k, v in raw.items():
        if k in ("cmd", "config"):
            continue
        if v is not None:
            cfg[k] = v
    return cfg


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    cfg = resolve_config(args)
    handler = {
        "estimate": cmd_estimate,
        "sweep": cmd_sweep,
        "phi": cmd_phi,
        "alpha": cmd_alpha,
        "scan": cmd_scan,
        "arm": cmd_arm,
        "qi": cmd_qi,
        "verify": cmd_verify,
        "plot": cmd_plot,
    }[args.cmd]
    return handler(cfg)


if __name__ == "__main__":
    sys.exit(main())
