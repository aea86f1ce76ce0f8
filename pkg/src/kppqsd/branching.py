"""Branching Levy processes: binary splitting at rate ``r``, independent
motion between splits, optional killing at the origin or freezing at a level.

Many independent runs are simulated together as one "forest": particle
arrays carry a run label, and per-run statistics come from ``bincount``.
Split times are exact (exponential clocks); motion between grid times uses
the exact-in-law mover from :mod:`kppqsd._motion`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import levy
from ._motion import advance
from ._rng import block_map, stream
from .levy import LevyTriplet
from .paths import PathConfig, killed_batch

EXTINCT = "extinct"
SURVIVED_CAP = "survived_cap"
UNDECIDED = "undecided"


@dataclass(frozen=True)
class BranchingConfig:
    cap: int = 100_000
    t_max: float = 50.0
    dt: float = 0.01
    seed: int = 0
    bridge_correction: bool = True
    threads: int = 1
    block_runs: int = 1024

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is mandatory")
        if self.cap < 1:
            raise ValueError("cap must be >= 1")
        if not self.dt > 0 or self.t_max < 0:
            raise ValueError("need dt > 0 and t_max >= 0")


@dataclass(frozen=True)
class ParticleSystem:
    time: float
    particles: np.ndarray
    frozen: np.ndarray = field(default_factory=lambda: np.empty(0))
    total_born: int = 1

    @property
    def size(self) -> int:
        return self.particles.size


@dataclass(frozen=True)
class ExtinctionOutcome:
    status: str
    time: float

    def __post_init__(self):
        if self.status not in (EXTINCT, SURVIVED_CAP, UNDECIDED):
            raise ValueError(f"unknown status {self.status!r}")


@dataclass
class BLPRun:
    snapshots: list
    cap_exceeded: bool


# ---------------------------------------------------------------------------
# one grid step of a forest
# ---------------------------------------------------------------------------

def _count_levels(diff, levels, run, old, new):
    i0 = np.searchsorted(levels, old, side="right")
    i1 = np.searchsorted(levels, new, side="right")
    moved = i1 > i0
    if moved.any():
        np.add.at(diff, (run[moved], i0[moved]), 1)
        np.add.at(diff, (run[moved], i1[moved]), -1)


def _branch_step(motion, x, run, h, r, rng, track=None, level=0.0, lmax=None, levels=None, diff=None):
    """Advance a forest by ``h``; splits inside the step are resolved exactly.

    Returns ``(x, run, lmax, gone_runs, births)``; ``gone_runs`` lists the run
    label of every particle killed (``track="min"``) or frozen (``"max"``).
    """
    rem = np.full(x.size, float(h))
    out_x, out_run, out_max, gone, births = [], [], [], [], 0
    while x.size:
        if r > 0:
            e = rng.standard_exponential(x.size) / r
        else:
            e = np.full(x.size, np.inf)
        dur = np.minimum(e, rem)
        mv = advance(motion, x, dur, rng, track, level)
        if track == "min":
            lost = mv.ext <= level
        elif track == "max":
            lost = mv.ext >= level
        else:
            lost = np.zeros(x.size, dtype=bool)
        if lmax is not None:
            new = np.maximum(lmax, mv.ext)
            _count_levels(diff, levels, run, lmax, new)
            lmax = new
        if lost.any():
            gone.append(run[lost])
        split = ~lost & (e < rem)
        stay = ~lost & ~split
        out_x.append(mv.x[stay])
        out_run.append(run[stay])
        if lmax is not None:
            out_max.append(lmax[stay])
        births += int(split.sum())
        x = np.repeat(mv.x[split], 2)
        run = np.repeat(run[split], 2)
        rem = np.repeat(rem[split] - e[split], 2)
        if lmax is not None:
            lmax = np.repeat(lmax[split], 2)
    cat = np.concatenate
    return (cat(out_x), cat(out_run), cat(out_max) if lmax is not None else None,
            cat(gone) if gone else np.empty(0, dtype=np.int64), births)


def _steps(t_end, dt):
    n = int(math.ceil(t_end / dt - 1e-9))
    return [(k * dt, min(dt, t_end - k * dt)) for k in range(n)]


# ---------------------------------------------------------------------------
# free branching motion
# ---------------------------------------------------------------------------

def run_blp(model: LevyTriplet, r: float, x0: float, cfg: BranchingConfig,
            c: float = 0.0, tag: str = "blp") -> BLPRun:
    """Single run without killing; one snapshot per grid time up to ``t_max``.

    Stops early (``cap_exceeded``) once the population exceeds ``cfg.cap``.
    """
    rng = stream(cfg.seed, tag, 0)
    motion = model.with_drift(model.b - c)
    x = np.array([float(x0)])
    run = np.zeros(1, dtype=np.int64)
    born = 1
    snaps = [ParticleSystem(0.0, x.copy(), total_born=born)]
    for t, h in _steps(cfg.t_max, cfg.dt):
        x, run, _, _, b = _branch_step(motion, x, run, h, r, rng)
        born += b
        snaps.append(ParticleSystem(t + h, x.copy(), total_born=born))
        if x.size > cfg.cap:
            return BLPRun(snaps, True)
    return BLPRun(snaps, False)


def population_sizes(model: LevyTriplet, r: float, t: float, n_runs: int, cfg: BranchingConfig,
                     tag: str = "yule") -> np.ndarray:
    """Particle counts at time ``t`` for ``n_runs`` independent runs."""

    def block(k, s, e):
        rng = stream(cfg.seed, tag, k)
        x = np.zeros(e - s)
        run = np.arange(e - s)
        for _, h in _steps(t, cfg.dt):
            x, run, _, _, _ = _branch_step(model, x, run, h, r, rng)
        return np.bincount(run, minlength=e - s)

    return np.concatenate(block_map(block, n_runs, cfg.block_runs, cfg.threads))


@dataclass
class SpeedEstimate:
    mean: float
    se: float
    values: np.ndarray
    t: float
    target: float
    kept: int


def _prune_top(x, run, keep):
    order = np.lexsort((-x, run))
    x, run = x[order], run[order]
    rank = np.arange(run.size) - np.searchsorted(run, run, side="left")
    sel = rank < keep
    return x[sel], run[sel]


def max_speed_estimate(model: LevyTriplet, r: float, t: float, n_runs: int, cfg: BranchingConfig,
                       keep: int = 10_000, tag: str = "speed") -> SpeedEstimate:
    """Mean of ``R_t / t`` over runs, ``R_t`` the rightmost particle.

    Only the ``keep`` rightmost particles of each run are retained after every
    grid step; particles far behind the leader almost never father the
    maximum, and the population would otherwise grow like ``exp(r t)``.
    """

    def block(k, s, e):
        rng = stream(cfg.seed, tag, k)
        x = np.zeros(e - s)
        run = np.arange(e - s)
        for _, h in _steps(t, cfg.dt):
            x, run, _, _, _ = _branch_step(model, x, run, h, r, rng)
            x, run = _prune_top(x, run, keep)
        best = np.full(e - s, -np.inf)
        np.maximum.at(best, run, x)
        return best

    values = np.concatenate(block_map(block, n_runs, max(1, cfg.block_runs // 16), cfg.threads)) / t
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.nan
    return SpeedEstimate(float(values.mean()), se, values, t, levy.gamma_inverse(model, r), keep)


# ---------------------------------------------------------------------------
# killed at the origin
# ---------------------------------------------------------------------------

@dataclass
class KilledForest:
    status: np.ndarray
    time: np.ndarray
    window_counts: np.ndarray
    count_series: np.ndarray | None = None

    def outcome(self, i: int) -> ExtinctionOutcome:
        return ExtinctionOutcome(str(self.status[i]), float(self.time[i]))


def _killed_forest(motion, r, x0, n, cfg, rng, window, t_end, record_series):
    lo_w, hi_w = window
    x = np.full(n, float(x0))
    run = np.arange(n)
    status = np.full(n, UNDECIDED, dtype=object)
    time = np.full(n, t_end)
    open_ = np.ones(n, dtype=bool)
    series = [np.ones(n, dtype=np.int64)] if record_series else None
    track = "min" if cfg.bridge_correction else None
    for t, h in _steps(t_end, cfg.dt):
        if not open_.any():
            break
        x, run, _, _, _ = _branch_step(motion, x, run, h, r, rng, track=track, level=0.0)
        if track is None:
            ok = x > 0
            x, run = x[ok], run[ok]
        counts = np.bincount(run, minlength=n)
        dead = open_ & (counts == 0)
        status[dead], time[dead] = EXTINCT, t + h
        full = open_ & (counts >= cfg.cap)
        status[full], time[full] = SURVIVED_CAP, t + h
        open_ &= ~(dead | full)
        if full.any():
            sel = open_[run]
            x, run = x[sel], run[sel]
        if record_series:
            inw = (x > lo_w) & (x <= hi_w)
            series.append(np.bincount(run[inw], minlength=n))
    inw = (x > lo_w) & (x <= hi_w)
    wc = np.bincount(run[inw], minlength=n)
    return status, time, wc, (np.stack(series, axis=1) if record_series else None)


def run_blp_killed(model: LevyTriplet, c: float, r: float, x0: float, cfg: BranchingConfig,
                   window=(0.0, math.inf), tag: str = "killed_blp"):
    """One run of the branching process driven by ``X - ct``, killed at 0.

    Returns ``(ExtinctionOutcome, counts)`` where ``counts[k]`` is the number
    of particles in ``window = (lo, hi]`` at grid time ``k * dt``.
    """
    if not x0 > 0:
        raise ValueError("x0 must be positive")
    rng = stream(cfg.seed, tag, 0)
    motion = model.with_drift(model.b - c)
    status, time, _, series = _killed_forest(motion, r, x0, 1, cfg, rng, window, cfg.t_max, True)
    return ExtinctionOutcome(str(status[0]), float(time[0])), series[0]


@dataclass
class ExtinctionScan:
    c: float
    r: float
    n_runs: int
    extinct_frac: float
    survived_frac: float
    undecided_frac: float
    gamma_of_c: float
    outcomes: list

    @property
    def alive_frac(self) -> float:
        return self.survived_frac + self.undecided_frac

    @property
    def classification(self) -> str:
        """Label from the fraction of runs not extinct by ``t_max``.

        ``"survives"`` if at least 2% of runs hit the cap or are still
        alive, ``"extinct"`` if at most 1% are, ``"undecided"`` in between.
        Slowly growing supercritical populations often stay below the cap at
        ``t_max`` but are rarely extinct, hence counting them as alive.
        """
        if self.alive_frac >= 0.02:
            return "survives"
        if self.alive_frac <= 0.01:
            return "extinct"
        return "undecided"


def extinction_scan(model: LevyTriplet, c: float, r: float, x0: float, n_runs: int,
                    cfg: BranchingConfig, tag: str = "phase") -> ExtinctionScan:
    """Classify ``n_runs`` killed branching runs as extinct / capped / undecided."""
    motion = model.with_drift(model.b - c)

    def block(k, s, e):
        rng = stream(cfg.seed, f"{tag}:{c!r}:{r!r}", k)
        status, time, _, _ = _killed_forest(motion, r, x0, e - s, cfg, rng, (0.0, math.inf), cfg.t_max, False)
        return status, time

    parts = block_map(block, n_runs, cfg.block_runs, cfg.threads)
    status = np.concatenate([p[0] for p in parts])
    time = np.concatenate([p[1] for p in parts])
    outcomes = [ExtinctionOutcome(str(s), float(t)) for s, t in zip(status, time)]
    frac = {k: float(np.mean(status == k)) for k in (EXTINCT, SURVIVED_CAP, UNDECIDED)}
    return ExtinctionScan(c, r, n_runs, frac[EXTINCT], frac[SURVIVED_CAP], frac[UNDECIDED],
                          float(levy.legendre(model, c)), outcomes)


@dataclass
class ManyToOne:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def z(self) -> float:
        se = self.combined_se
        return abs(self.lhs - self.rhs) / se if se > 0 else (0.0 if self.lhs == self.rhs else math.inf)


def many_to_one_check(model: LevyTriplet, c: float, r: float, A, t: float, n_runs: int, n_paths: int,
                      cfg: BranchingConfig, x0: float = 1.0, tag: str = "m2o") -> ManyToOne:
    """Both sides of ``E Z_t(A) = e^{rt} P(X_t - ct in A, no absorption)``.

    The left side counts branching particles in ``A = (lo, hi]``; the right
    side uses independent single paths.
    """
    motion = model.with_drift(model.b - c)
    nocap = BranchingConfig(cap=2 ** 62, t_max=t, dt=cfg.dt, seed=cfg.seed,
                            bridge_correction=cfg.bridge_correction, threads=cfg.threads,
                            block_runs=cfg.block_runs)

    def block(k, s, e):
        rng = stream(cfg.seed, tag, k)
        return _killed_forest(motion, r, x0, e - s, nocap, rng, tuple(A), t, False)[2]

    counts = np.concatenate(block_map(block, n_runs, 4 * cfg.block_runs, cfg.threads)).astype(float)
    lhs, lhs_se = counts.mean(), counts.std(ddof=1) / math.sqrt(n_runs)

    pcfg = PathConfig(dt=cfg.dt, horizon=t, seed=cfg.seed, bridge_correction=cfg.bridge_correction,
                      threads=cfg.threads)
    batch = killed_batch(model, c, x0, n_paths, pcfg, record_times=[t], tag=tag + ":paths")
    pos, _ = batch.snapshot(t)
    hits = np.count_nonzero((pos > A[0]) & (pos <= A[1]))
    p = hits / n_paths
    growth = math.exp(r * t)
    rhs, rhs_se = growth * p, growth * math.sqrt(p * (1 - p) / n_paths)
    return ManyToOne(float(lhs), float(lhs_se), float(rhs), float(rhs_se))


# ---------------------------------------------------------------------------
# Galton-Watson level counts
# ---------------------------------------------------------------------------

@dataclass
class GWCounts:
    levels: np.ndarray
    counts: np.ndarray
    n_undecided: int
    n_runs: int

    def generating_function(self, u):
        """``mean(u ** G_x)`` per level; ``u`` broadcasts against levels."""
        u = np.asarray(u, dtype=float)
        if u.ndim <= 1:
            return np.mean(np.power(u, self.counts), axis=0)
        return np.mean(np.power(u[:, None, :], self.counts[None]), axis=1)


def gw_counts(model: LevyTriplet, c: float, r: float, levels, n_runs: int, cfg: BranchingConfig,
              tag: str = "gw") -> GWCounts:
    """Number ``G_x`` of lineages that first reach level ``x``.

    The motion is the dual process ``-X_t + c t`` started at 0. One coupled
    run freezes particles at the highest level and records, for every lower
    level, the lineages that cross it; a run ends when nothing is left
    moving. Runs still active at ``t_max`` or above ``cap`` particles are
    dropped and counted as undecided. ``G_0 = 1`` by convention.
    """
    levels = np.asarray(levels, dtype=float)
    if np.any(levels < 0) or np.any(np.diff(levels) <= 0):
        raise ValueError("levels must be nonnegative and strictly increasing")
    dual = levy.dual_reflect(model)
    motion = dual.with_drift(dual.b + c)
    top = float(levels[-1])
    positive = levels > 0

    def block(k, s, e):
        rng = stream(cfg.seed, tag, k)
        n = e - s
        x = np.zeros(n)
        run = np.arange(n)
        lmax = np.zeros(n)
        diff = np.zeros((n, levels.size + 1), dtype=np.int64)
        done = np.zeros(n, dtype=bool)
        bad = np.zeros(n, dtype=bool)
        for _, h in _steps(cfg.t_max, cfg.dt):
            if x.size == 0:
                break
            x, run, lmax, _, _ = _branch_step(motion, x, run, h, r, rng, track="max", level=top,
                                              lmax=lmax, levels=levels, diff=diff)
            counts = np.bincount(run, minlength=n)
            over = counts > cfg.cap
            if over.any():
                bad |= over
                sel = ~over[run]
                x, run, lmax = x[sel], run[sel], lmax[sel]
        active = np.bincount(run, minlength=n) > 0
        bad |= active
        done = ~bad
        g = np.cumsum(diff, axis=1)[:, :levels.size]
        g[:, ~positive] = 1
        return g[done], int(bad.sum())

    parts = block_map(block, n_runs, cfg.block_runs, cfg.threads)
    counts = np.concatenate([p[0] for p in parts], axis=0)
    return GWCounts(levels, counts, sum(p[1] for p in parts), n_runs)
