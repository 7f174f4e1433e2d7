"""Reproducible Monte Carlo estimation of event probabilities.

A trial is a pure function of (master_seed, trial_index): it samples padded
windows from derived Philox streams, certifies the queried regions
(extending by annular shells when the certificate fails, aborting the trial
after 8 shells), colors the sites, and decides every event of the program
exactly.  Aggregation is an associative reduction over trial indices, so
estimates are bit-identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__, events as events_mod
from .events import EventSpec
from .geom import (
    PointSample,
    Rect,
    Region,
    SquareAnnulus,
    default_margin,
    delaunay,
    determinism_certificate,
    region_rects,
    sample_poisson,
    extend_sample,
    shell_rects,
)
from .streams import derive_stream
from .tiling import ColoredTiling, GraphCache, color_sites

__all__ = [
    "TrialPlan",
    "WindowPlan",
    "TrialProgram",
    "Estimate",
    "JointEstimate",
    "CheckpointError",
    "AbortStorm",
    "derive_stream",
    "wilson_interval",
    "run_trials",
    "run_program",
    "resume",
    "program_for",
]

MAX_SHELLS = 8


class AbortStorm(RuntimeError):
    """Raised when certificate aborts exceed the plausible-rarity threshold."""


class CheckpointError(RuntimeError):
    """Raised on malformed checkpoint files; carries the offending line number."""


@dataclass(frozen=True, kw_only=True)
class TrialPlan:
    """Budget and stopping rule for one estimation run."""

    n_max: int
    ci_target: float = 0.0      # stop when every halfwidth <= ci_target (0 = run out n_max)
    z: float = 1.96             # confidence multiplier for intervals
    workers: int = 1
    check_every: int = 256      # stopping checked at fixed cadence for determinism

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.ci_target < 0:
            raise ValueError("ci_target must be >= 0")
        if self.workers < 1 or self.check_every < 1:
            raise ValueError("workers and check_every must be >= 1")


@dataclass(frozen=True)
class WindowPlan:
    """One sampling window: base region dilated by margin, regions to certify."""

    base: Region
    margin: float
    certify: tuple[Region, ...] = ()


@dataclass(frozen=True)
class TrialProgram:
    """Windows plus (window index, event) pairs decided on shared samples."""

    windows: tuple[WindowPlan, ...]
    events: tuple[tuple[int, EventSpec], ...]
    p: float
    intensity: float = 1.0

    def __post_init__(self):
        for wi, ev in self.events:
            if not (0 <= wi < len(self.windows)):
                raise ValueError(f"event window index {wi} out of range")
            if ev.p != self.p or ev.intensity != self.intensity:
                raise ValueError("all events of a program must share p and intensity")


def program_for(spec: EventSpec) -> TrialProgram:
    w = spec.window()
    margin = w.margin if w.margin is not None else default_margin(spec.intensity)
    return TrialProgram(windows=(WindowPlan(w.base, margin, w.certify),),
                        events=((0, spec),), p=spec.p, intensity=spec.intensity)


# ---------------------------------------------------------------------------
# intervals


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("wilson_interval needs n >= 1")
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    phat = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def wilson_halfwidth(k: int, n: int, z: float = 1.96) -> float:
    lo, hi = wilson_interval(k, n, z)
    return (hi - lo) / 2.0


# ---------------------------------------------------------------------------
# single trial


def run_single_trial(program: TrialProgram, master_seed: int, trial_index: int):
    """Run one trial; returns (outcomes bool array, aborted, stream ids)."""
    tilings = []
    stream_ids = []
    dm = default_margin(program.intensity)
    for w, wp in enumerate(program.windows):
        st = derive_stream(master_seed, trial_index, f"pos/{w}")
        stream_ids.append(st.id)
        sample = sample_poisson(region_rects(wp.base.dilate(wp.margin)),
                                program.intensity, st)
        tri = delaunay(sample, trusted=True)
        shell = 0
        while wp.certify:
            ok = sample.n > 0 and all(
                determinism_certificate(sample, r, tri=tri) for r in wp.certify)
            if ok:
                break
            shell += 1
            if shell > MAX_SHELLS:
                return None, True, stream_ids
            sh = shell_rects(wp.base, wp.margin + (shell - 1) * dm,
                             wp.margin + shell * dm)
            sts = derive_stream(master_seed, trial_index, f"pos/{w}/shell{shell}")
            stream_ids.append(sts.id)
            sample = extend_sample(sample, sh, sts)
            tri = delaunay(sample, trusted=True)
        cst = derive_stream(master_seed, trial_index, f"col/{w}")
        stream_ids.append(cst.id)
        tiling = color_sites(sample, program.p, cst, tri=tri)
        tilings.append(tiling.with_certified(wp.certify))

    caches = [GraphCache(t) for t in tilings]
    out = np.array([ev.decide(tilings[wi], caches[wi])
                    for wi, ev in program.events], dtype=bool)
    return out, False, stream_ids


def _chunk_worker(args):
    program, master_seed, start, stop = args
    k = len(program.events)
    outs = []
    records = []
    aborted = 0
    for i in range(start, stop):
        out, ab, sids = run_single_trial(program, master_seed, i)
        if ab:
            aborted += 1
            records.append((i, None, sids))
        else:
            outs.append(out)
            records.append((i, out.astype(np.int8).tolist(), sids))
    if outs:
        o = np.array(outs, dtype=np.int64)
        joint = o.T @ o
        n = len(outs)
    else:
        joint = np.zeros((k, k), dtype=np.int64)
        n = 0
    return n, aborted, joint, records


# ---------------------------------------------------------------------------
# aggregated results


@dataclass(frozen=True)
class Estimate:
    """Bernoulli estimate with Wilson interval and full seed provenance."""

    spec: EventSpec
    n: int
    k: int
    p_hat: float
    ci: tuple[float, float]
    z: float
    master_seed: int
    aborted_trials: int

    @property
    def halfwidth(self) -> float:
        return (self.ci[1] - self.ci[0]) / 2.0

    @property
    def sigma(self) -> float:
        """Plain binomial standard error (for inequality slack arithmetic)."""
        return math.sqrt(max(self.p_hat * (1 - self.p_hat), 1.0 / self.n) / self.n)


@dataclass(frozen=True)
class JointEstimate:
    """Joint outcome counts for a multi-event program on shared samples."""

    program: TrialProgram
    n: int
    joint: np.ndarray          # (k, k) pair counts; diagonal = marginal counts
    z: float
    master_seed: int
    aborted_trials: int

    def marginal(self, i: int) -> Estimate:
        k = int(self.joint[i, i])
        return Estimate(spec=self.program.events[i][1], n=self.n, k=k,
                        p_hat=k / self.n, ci=wilson_interval(k, self.n, self.z),
                        z=self.z, master_seed=self.master_seed,
                        aborted_trials=self.aborted_trials)

    def pair_count(self, i: int, j: int) -> int:
        return int(self.joint[i, j])

    def covariance(self, i: int, j: int) -> float:
        n = self.n
        return self.joint[i, j] / n - (self.joint[i, i] / n) * (self.joint[j, j] / n)

    def diff_estimate(self, i: int, j: int):
        """Paired estimate of P[i] - P[j]: (diff, sigma)."""
        n = self.n
        p1 = self.joint[i, i] / n
        p2 = self.joint[j, j] / n
        p12 = self.joint[i, j] / n
        d = p1 - p2
        var = max(p1 + p2 - 2 * p12 - d * d, 0.0) / n
        return d, math.sqrt(var)


# ---------------------------------------------------------------------------
# checkpoint serialization

_CLASS_REGISTRY = {
    cls.__name__: cls
    for cls in (Rect, SquareAnnulus, WindowPlan, TrialProgram, TrialPlan,
                events_mod.Crossing, events_mod.HEvent, events_mod.XEvent,
                events_mod.Circuit, events_mod.OneArm, events_mod.FEvent)
}


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        d = {"__class__": type(obj).__name__}
        for f in dataclasses.fields(obj):
            d[f.name] = _to_jsonable(getattr(obj, f.name))
        return d
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict) and "__class__" in obj:
        cls = _CLASS_REGISTRY[obj["__class__"]]
        kwargs = {k: _from_jsonable(v) for k, v in obj.items() if k != "__class__"}
        for f in dataclasses.fields(cls):
            if f.name in kwargs and isinstance(kwargs[f.name], list):
                kwargs[f.name] = tuple(kwargs[f.name])
        return cls(**kwargs)
    if isinstance(obj, list):
        return tuple(_from_jsonable(v) for v in obj)
    return obj


def _normalize_tuples(obj):
    # events tuples arrive as tuple of (int, EventSpec) pairs
    return obj


class _CheckpointWriter:
    def __init__(self, path, program, plan, master_seed, append: bool):
        self.path = path
        mode = "a" if append else "w"
        self.fh = open(path, mode, encoding="utf-8")
        if not append:
            header = {"record": "header", "format": 1, "version": __version__,
                      "master_seed": master_seed,
                      "program": _to_jsonable(program),
                      "plan": _to_jsonable(plan)}
            self.fh.write(json.dumps(header) + "\n")
            self.fh.flush()

    def write_trials(self, records):
        for idx, outcome, sids in records:
            rec = {"record": "trial", "index": idx,
                   "outcome": "aborted" if outcome is None else outcome,
                   "streams": sids}
            self.fh.write(json.dumps(rec) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


def _read_checkpoint(path):
    """Parse a checkpoint file; returns (header, records) or raises CheckpointError."""
    header = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1 and not line.strip():
                break
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CheckpointError(
                    f"corrupt checkpoint record at line {lineno}: {exc}") from exc
            if lineno == 1:
                if rec.get("record") != "header":
                    raise CheckpointError("line 1: missing checkpoint header")
                header = rec
            else:
                if rec.get("record") != "trial":
                    raise CheckpointError(f"line {lineno}: expected trial record")
                records.append(rec)
    return header, records


# ---------------------------------------------------------------------------
# the estimation loop


def _effective_workers(plan: TrialPlan) -> int:
    return max(1, min(plan.workers, plan.n_max))


def _run_counts(program: TrialProgram, plan: TrialPlan, master_seed: int,
                checkpoint_path=None, start_state=None):
    """Deterministic block loop; returns (n, joint, aborted, n_started)."""
    k = len(program.events)
    n = 0
    joint = np.zeros((k, k), dtype=np.int64)
    aborted = 0
    started = 0
    writer = None
    if start_state is not None:
        n, joint, aborted, started = start_state
    if checkpoint_path is not None:
        writer = _CheckpointWriter(checkpoint_path, program, plan, master_seed,
                                   append=started > 0)

    workers = _effective_workers(plan)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while started < plan.n_max:
            block = min(plan.check_every, plan.n_max - started)
            # contiguous chunks, merged in index order
            bounds = np.linspace(started, started + block, workers + 1).astype(int)
            tasks = [(program, master_seed, int(a), int(b))
                     for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            if pool is None:
                results = [_chunk_worker(t) for t in tasks]
            else:
                results = list(pool.map(_chunk_worker, tasks))
            for cn, cab, cjoint, crecords in results:
                n += cn
                aborted += cab
                joint += cjoint
                if writer is not None:
                    writer.write_trials(crecords)
            started += block

            if aborted >= 16 and aborted > 0.01 * started:
                raise AbortStorm(
                    f"certificate aborts in {aborted}/{started} trials; "
                    "the sampling margins are too thin for this geometry")
            if plan.ci_target > 0 and n > 0:
                hw = max(wilson_halfwidth(int(joint[i, i]), n, plan.z)
                         for i in range(k))
                if hw <= plan.ci_target:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
        if writer is not None:
            writer.close()
    return n, joint, aborted, started


def run_program(program: TrialProgram, plan: TrialPlan, master_seed: int,
                checkpoint_path=None) -> JointEstimate:
    """Estimate all events of a program on shared per-trial samples."""
    n, joint, aborted, _ = _run_counts(program, plan, master_seed,
                                       checkpoint_path=checkpoint_path)
    if n == 0:
        raise RuntimeError("all trials aborted; nothing to estimate")
    return JointEstimate(program=program, n=n, joint=joint, z=plan.z,
                         master_seed=master_seed, aborted_trials=aborted)


def run_trials(spec: EventSpec, plan: TrialPlan, master_seed: int,
               checkpoint_path=None) -> Estimate:
    """Estimate P[spec] with Wilson CI; deterministic in (seed, plan) for any
    worker count.  With checkpoint_path, appends one self-describing record
    per trial (resumable via `resume`)."""
    je = run_program(program_for(spec), plan, master_seed,
                     checkpoint_path=checkpoint_path)
    return je.marginal(0)


def resume(path, plan: TrialPlan | None = None) -> Estimate:
    """Continue an interrupted checkpointed run to completion.

    The trial outcomes are pure functions of (seed, index), so resuming
    reproduces exactly what an uninterrupted run would have computed.  A new
    plan may extend n_max; it must keep the cadence.
    """
    header, records = _read_checkpoint(path)
    if header is None:
        raise CheckpointError("empty checkpoint file has no header")
    program = _from_jsonable(header["program"])
    stored_plan = _from_jsonable(header["plan"])
    master_seed = header["master_seed"]
    if plan is None:
        plan = stored_plan

    k = len(program.events)
    n = 0
    joint = np.zeros((k, k), dtype=np.int64)
    aborted = 0
    seen = -1
    for rec in records:
        idx = rec["index"]
        if idx != seen + 1:
            raise CheckpointError(f"trial records not contiguous at index {idx}")
        seen = idx
        if rec["outcome"] == "aborted":
            aborted += 1
        else:
            o = np.array(rec["outcome"], dtype=np.int64)
            joint += np.outer(o, o)
            n += 1
    started = seen + 1
    if started % plan.check_every != 0 and started < plan.n_max:
        raise CheckpointError(
            f"checkpoint stops mid-block at {started} trials; "
            f"cadence is {plan.check_every}")

    if started < plan.n_max:
        stop_early = False
        if plan.ci_target > 0 and n > 0:
            hw = max(wilson_halfwidth(int(joint[i, i]), n, plan.z) for i in range(k))
            stop_early = hw <= plan.ci_target
        if not stop_early:
            n, joint, aborted, started = _run_counts(
                program, plan, master_seed, checkpoint_path=path,
                start_state=(n, joint, aborted, started))
    if n == 0:
        raise RuntimeError("all trials aborted; nothing to estimate")
    je = JointEstimate(program=program, n=n, joint=joint, z=plan.z,
                       master_seed=master_seed, aborted_trials=aborted)
    return je.marginal(0) if k == 1 else je
