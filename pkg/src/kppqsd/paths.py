"""Path-level Monte Carlo for ``X_t - c t``: killing at zero, Yaglom
conditioning, first-passage times and ladder-height renewal functions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import levy
from ._motion import advance, increments
from ._rng import block_map, stream
from .errors import AllAbsorbed
from .levy import LevyTriplet, TiltedModel

DEFAULT_BLOCK = 1 << 16


@dataclass(frozen=True)
class PathConfig:
    """Time grid and randomness for path simulations.

    ``bridge_correction`` turns on exact Brownian-bridge barrier detection
    between grid points; without it a path dies only when a grid value (or a
    post-jump value) is at or below zero.
    """

    dt: float = 1e-3
    horizon: float = 1.0
    seed: int = 0
    bridge_correction: bool = True
    threads: int = 1
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is mandatory")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def step_index(self, t: float) -> int:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not on the grid of step {self.dt}")
        if k > self.n_steps:
            raise ValueError(f"time {t} beyond horizon {self.horizon}")
        return k


@dataclass(frozen=True)
class KilledPathResult:
    survived: bool
    tau: float
    terminal: float
    trajectory: np.ndarray | None = None


class EmpiricalDistribution:
    """Weighted sample on the line, sorted, with CDF and KS queries."""

    def __init__(self, samples, weights=None):
        x = np.asarray(samples, dtype=float).ravel()
        w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).ravel()
        if x.shape != w.shape:
            raise ValueError("samples and weights differ in shape")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        order = np.argsort(x, kind="stable")
        self.samples = x[order]
        total = w.sum()
        self.weights = w[order] / total if total > 0 else w[order]
        self._cum = np.cumsum(self.weights)

    def __len__(self):
        return self.samples.size

    @property
    def n_effective(self) -> float:
        """Kish effective sample size."""
        return float(1.0 / np.sum(self.weights ** 2)) if self.samples.size else 0.0

    @classmethod
    def point_mass(cls, x0: float) -> "EmpiricalDistribution":
        return cls([x0])

    def cdf(self, x):
        i = np.searchsorted(self.samples, x, side="right")
        cum = np.concatenate([[0.0], self._cum])
        return cum[i]

    def mean(self) -> float:
        return float(self.weights @ self.samples)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.samples[rng.choice(self.samples.size, size=n, p=self.weights)]

    def ks(self, other) -> float:
        """Kolmogorov-Smirnov distance to a CDF callable or another distribution."""
        if isinstance(other, EmpiricalDistribution):
            pts = np.union1d(self.samples, other.samples)
            return float(np.max(np.abs(self.cdf(pts) - other.cdf(pts))))
        cdf = other.cdf if hasattr(other, "cdf") else other
        f = np.asarray(cdf(self.samples), dtype=float)
        right = self._cum
        left = right - self.weights
        return float(max(np.max(np.abs(right - f)), np.max(np.abs(left - f))))


@dataclass
class YaglomResult:
    distribution: EmpiricalDistribution
    survival: float
    survival_se: float
    t: float
    n_paths: int


@dataclass
class KilledBatch:
    """Aggregate of many killed paths on a common grid."""

    times: np.ndarray
    survival: np.ndarray
    survival_se: np.ndarray
    tau: np.ndarray
    terminal: np.ndarray
    snapshots: dict = field(default_factory=dict)
    n_paths: int = 0

    def snapshot(self, t: float):
        key = min(self.snapshots, key=lambda s: abs(s - t))
        return self.snapshots[key]


def simulate_paths(model: LevyTriplet, c: float, x0: float, cfg: PathConfig, n_paths: int = 1,
                   tag: str = "paths") -> np.ndarray:
    """Skeletons of ``x0 + X_t - c t`` on the grid, shape ``(n_paths, n_steps + 1)``."""
    n_steps = cfg.n_steps
    motion = model.with_drift(model.b - c)

    def run(k, s, e):
        rng = stream(cfg.seed, tag, k)
        inc = increments(motion, (e - s, n_steps), cfg.dt, rng)
        out = np.empty((e - s, n_steps + 1))
        out[:, 0] = x0
        np.cumsum(inc, axis=1, out=out[:, 1:])
        out[:, 1:] += x0
        return out

    parts = block_map(run, n_paths, max(1, cfg.block_size // max(1, n_steps)), cfg.threads)
    return np.concatenate(parts, axis=0)


def simulate_path(model: LevyTriplet, c: float, x0: float, cfg: PathConfig) -> np.ndarray:
    """One skeleton of ``X_t - c t`` started at ``x0``."""
    return simulate_paths(model, c, x0, cfg, 1)[0]


def killed_batch(model: LevyTriplet, c: float, x0, n_paths: int, cfg: PathConfig,
                 record_times=(), tilt: float | None = None, tag: str = "killed") -> KilledBatch:
    """Simulate ``n_paths`` copies of ``X_t - c t`` killed on entering (-inf, 0].

    ``x0`` is a scalar or an array of starting points. With ``tilt=theta``
    paths are drawn under the exponentially tilted law and carry likelihood
    ratios ``exp(-theta (Y_t - Y_0) + (psi(theta) - c theta) t)``; survival
    and snapshots are then weighted accordingly.
    """
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths,))
    if np.any(x0 <= 0):
        raise ValueError("starting points must be positive")
    n_steps = cfg.n_steps
    rec = {cfg.step_index(t): float(t) for t in record_times}
    if tilt is None:
        motion, kappa = model.with_drift(model.b - c), 0.0
    else:
        motion = levy.esscher_tilt(model, tilt, c).model
        kappa = levy.psi(model, tilt) - c * tilt
    dt = cfg.dt

    def run(k, s, e):
        rng = stream(cfg.seed, tag, k)
        y0 = x0[s:e]
        n = e - s
        idx = np.arange(n)
        pos = y0.copy()
        tau = np.full(n, np.inf)
        terminal = np.empty(n)
        s1 = np.zeros(n_steps + 1)
        s2 = np.zeros(n_steps + 1)
        s1[0] = s2[0] = n
        snaps = {}
        if 0 in rec:
            snaps[0] = (pos.copy(), np.ones(n))
        for step in range(n_steps):
            if idx.size == 0:
                break
            if cfg.bridge_correction:
                mv = advance(motion, pos, dt, rng, track="min", level=0.0)
                dead = mv.ext <= 0
                when = mv.t_cross
            else:
                mv = advance(motion, pos, dt, rng)
                dead = mv.x <= 0
                when = np.full(pos.size, dt)
            if dead.any():
                tau[idx[dead]] = step * dt + when[dead]
                terminal[idx[dead]] = mv.x[dead]
                keep = ~dead
                idx, pos = idx[keep], mv.x[keep]
            else:
                pos = mv.x
            t = (step + 1) * dt
            if tilt is None:
                w = np.ones(pos.size)
            else:
                w = np.exp(-tilt * (pos - y0[idx]) + kappa * t)
            s1[step + 1] = w.sum()
            s2[step + 1] = (w * w).sum()
            if step + 1 in rec:
                snaps[step + 1] = (pos.copy(), w)
        terminal[idx] = pos
        return tau, terminal, s1, s2, snaps

    parts = block_map(run, n_paths, cfg.block_size, cfg.threads)
    tau = np.concatenate([p[0] for p in parts])
    terminal = np.concatenate([p[1] for p in parts])
    s1 = np.sum(np.stack([p[2] for p in parts]), axis=0)
    s2 = np.sum(np.stack([p[3] for p in parts]), axis=0)
    surv = s1 / n_paths
    se = np.sqrt(np.maximum(s2 / n_paths - surv ** 2, 0.0) / n_paths)
    snapshots = {}
    for k, t in rec.items():
        xs = [p[4][k][0] for p in parts if k in p[4]]
        ws = [p[4][k][1] for p in parts if k in p[4]]
        snapshots[t] = (np.concatenate(xs) if xs else np.empty(0),
                        np.concatenate(ws) if ws else np.empty(0))
    times = np.arange(n_steps + 1) * dt
    return KilledBatch(times, surv, se, tau, terminal, snapshots, n_paths)


def simulate_killed(model: LevyTriplet, c: float, x0: float, cfg: PathConfig,
                    keep_trajectory: bool = False, tag: str = "single") -> KilledPathResult:
    """One path of ``X_t - c t`` from ``x0 > 0``, killed at zero."""
    if not x0 > 0:
        raise ValueError("x0 must be positive")
    rng = stream(cfg.seed, tag, 0)
    motion = model.with_drift(model.b - c)
    pos = np.array([float(x0)])
    traj = [float(x0)]
    for step in range(cfg.n_steps):
        if cfg.bridge_correction:
            mv = advance(motion, pos, cfg.dt, rng, track="min")
            dead, when = mv.ext[0] <= 0, mv.t_cross[0]
        else:
            mv = advance(motion, pos, cfg.dt, rng)
            dead, when = mv.x[0] <= 0, cfg.dt
        pos = mv.x
        traj.append(float(pos[0]))
        if dead:
            return KilledPathResult(False, step * cfg.dt + when, float(pos[0]),
                                    np.array(traj) if keep_trajectory else None)
    return KilledPathResult(True, cfg.horizon, float(pos[0]),
                            np.array(traj) if keep_trajectory else None)


def _resolve_tilt(model, c, tilt):
    if tilt == "auto":
        return levy.legendre_argmax(model, c)
    return tilt


def yaglom_mc(model: LevyTriplet, c: float, x0: float, t: float, n_paths: int, cfg: PathConfig,
              tilt=None) -> YaglomResult:
    """Law of ``X_t - c t`` given survival up to ``t``, from the point ``x0``.

    ``tilt="auto"`` samples under the tilt ``theta_c`` that makes the motion
    driftless, which keeps the survivor count healthy at large ``t``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if t == 0:
        return YaglomResult(EmpiricalDistribution.point_mass(x0), 1.0, 0.0, 0.0, n_paths)
    theta = _resolve_tilt(model, c, tilt)
    run_cfg = PathConfig(cfg.dt, t, cfg.seed, cfg.bridge_correction, cfg.threads, cfg.block_size)
    batch = killed_batch(model, c, x0, n_paths, run_cfg, record_times=[t], tilt=theta, tag="yaglom")
    pos, w = batch.snapshot(t)
    if pos.size == 0:
        raise AllAbsorbed(f"no survivor among {n_paths} paths at t={t}")
    return YaglomResult(EmpiricalDistribution(pos, w), float(batch.survival[-1]),
                        float(batch.survival_se[-1]), t, n_paths)


@dataclass
class FirstPassageSample:
    tau: np.ndarray
    censored: np.ndarray
    horizon: float

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())


def first_passage_mc(model: LevyTriplet, c: float, x0, n_paths: int, cfg: PathConfig) -> FirstPassageSample:
    """Absorption times of ``X_t - c t`` at zero, censored at the horizon."""
    batch = killed_batch(model, c, x0, n_paths, cfg, tag="fpt")
    cens = ~np.isfinite(batch.tau)
    tau = np.where(cens, cfg.horizon, batch.tau)
    return FirstPassageSample(tau, cens, cfg.horizon)


# ---------------------------------------------------------------------------
# ladder heights and the renewal function
# ---------------------------------------------------------------------------

@dataclass
class RenewalEstimate:
    xs: np.ndarray
    h: np.ndarray
    heights: np.ndarray
    n_censored: int
    oscillating: bool

    @property
    def mean_height(self) -> float:
        return float(self.heights.mean()) if self.heights.size else math.nan


def ladder_heights(model: LevyTriplet, n: int, cfg: PathConfig, tag: str = "ladder"):
    """Strict descending ladder heights of the ``cfg.dt`` skeleton of ``model``.

    Each excursion starts at a running minimum and ends at the next strict
    one; its height is how far the new minimum undershoots the old. Returns
    ``(heights, n_censored)`` where censored excursions did not finish within
    ``cfg.horizon``.
    """
    max_steps = cfg.n_steps

    def run(k, s, e):
        rng = stream(cfg.seed, tag, k)
        level = np.zeros(e - s)
        out = []
        steps, m = 0, 16
        while level.size and steps < max_steps:
            m_eff = min(m, max_steps - steps, max(1, 4_000_000 // level.size))
            path = level[:, None] + np.cumsum(increments(model, (level.size, m_eff), cfg.dt, rng), axis=1)
            below = path < 0
            hit = below.any(axis=1)
            first = np.argmax(below, axis=1)
            out.append(-path[hit, first[hit]])
            level = path[~hit, -1]
            steps += m_eff
            m = min(2 * m, 1 << 14)
        return np.concatenate(out) if out else np.empty(0), int(level.size)

    parts = block_map(run, n, cfg.block_size, cfg.threads)
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


def _renewal_on_lattice(heights, n_total, oscillating, x_max, spacing):
    """Renewal function ``sum_k P(H_1 + ... + H_k <= x)`` on a lattice."""
    n_done = heights.size
    mass = 1.0 / n_done if oscillating else 1.0 / n_total
    pos = heights / spacing
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    n_lat = int(math.ceil(x_max / spacing)) + 2
    keep = lo < n_lat
    f = np.bincount(lo[keep], weights=(1 - frac[keep]) * mass, minlength=n_lat + 1)
    keep1 = lo + 1 < n_lat
    f += np.bincount(lo[keep1] + 1, weights=frac[keep1] * mass, minlength=n_lat + 1)
    f = f[:n_lat]
    f0 = f[0]
    support = np.flatnonzero(f[1:]) + 1
    kmax = int(support.max()) if support.size else 1
    fk = f[1:kmax + 1]
    u = np.zeros(n_lat)
    u[0] = 1.0 / (1.0 - f0)
    for j in range(1, n_lat):
        lo_j = max(0, j - kmax)
        u[j] = np.dot(fk[:j - lo_j], u[j - 1:lo_j - 1 if lo_j > 0 else None:-1]) / (1.0 - f0)
    return np.cumsum(u), u[0]


def ladder_renewal(tilted, xs, n_paths: int, cfg: PathConfig, tag: str = "ladder") -> RenewalEstimate:
    """Renewal function of the descending ladder-height process.

    ``tilted`` is a :class:`TiltedModel` (or plain triplet) whose unit-time
    mean is nonnegative. The estimate is ``h(x) = U(x) - U(0)`` where ``U``
    counts strict descending ladder epochs of the skeleton walk with depth at
    most ``x``; ``h(0) = 0``. When the mean is zero the walk oscillates and
    unfinished excursions are discarded; otherwise they count as the final
    (infinite) ladder epoch.
    """
    model = tilted.model if isinstance(tilted, TiltedModel) else tilted
    mu = levy.mean(model)
    scale = math.sqrt(levy.variance(model))
    if mu < -1e-8 * scale:
        raise ValueError(f"process drifts to -infinity (mean {mu})")
    oscillating = abs(mu) <= 1e-8 * scale
    xs = np.asarray(xs, dtype=float)
    heights, n_cens = ladder_heights(model, n_paths, cfg, tag)
    if heights.size == 0:
        return RenewalEstimate(xs, np.zeros_like(xs), heights, n_cens, oscillating)
    x_max = float(xs.max()) if xs.size else 0.0
    spacing = min(np.diff(np.unique(xs)).min() if xs.size > 1 else x_max, heights.mean() / 8)
    spacing = max(spacing, x_max / 200_000)
    cum, u0 = _renewal_on_lattice(heights, n_paths, oscillating, x_max, spacing)
    grid = np.arange(cum.size) * spacing
    h = np.interp(xs, grid, cum) - u0
    h = np.maximum(h, 0.0)
    h[xs <= 0] = 0.0
    return RenewalEstimate(xs, h, heights, n_cens, oscillating)
