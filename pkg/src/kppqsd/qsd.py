"""Quasi-stationary distributions of ``X_t - c t`` killed at zero.

Two independent constructions are provided: the tilted renewal density
``v(x) ~ exp(-theta x) h(x)`` built from ladder heights of the dual tilted
process, and the Yaglom route that conditions paths from a point on survival.
Brownian closed forms serve as oracles for both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from . import levy
from ._rng import stream
from .errors import AllAbsorbed, RangeError
from .levy import LevyTriplet
from .paths import (EmpiricalDistribution, PathConfig, killed_batch, ladder_renewal, yaglom_mc)

DEFAULT_POINTS = 2000
DEFAULT_SPAN = 20.0


@dataclass
class QSDensity:
    """Gridded density on ``(0, x_max]`` with its construction metadata."""

    grid: np.ndarray
    values: np.ndarray
    theta: float
    c: float
    r: float
    normalization: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        v = np.maximum(np.asarray(self.values, dtype=float), 0.0)
        x = np.concatenate([[0.0], self.grid]) if self.grid[0] > 0 else self.grid
        vv = np.concatenate([[0.0], v]) if self.grid[0] > 0 else v
        z = trapezoid(vv, x)
        if not z > 0:
            raise ValueError("density has zero mass on the grid")
        self.values = v / z
        self.normalization = {"raw_integral": float(z), **self.normalization}
        self._x = x
        self._cum = np.concatenate([[0.0], np.cumsum(0.5 * (vv[1:] + vv[:-1]) * np.diff(x))]) / z

    @property
    def mean_absorption_target(self) -> float:
        return 1.0 / self.r if self.r > 0 else math.inf

    def integral(self) -> float:
        return float(self._cum[-1])

    def cdf(self, x):
        return np.interp(x, self._x, self._cum, left=0.0, right=1.0)

    def mean(self) -> float:
        vv = np.interp(self._x, self.grid, self.values, left=0.0)
        return float(trapezoid(self._x * vv, self._x))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Inverse-CDF draws with linear interpolation of the cumulative."""
        u = rng.random(n)
        cum, idx = np.unique(self._cum, return_index=True)
        return np.interp(u, cum, self._x[idx])

    def ks(self, other) -> float:
        if isinstance(other, EmpiricalDistribution):
            return other.ks(self)
        cdf = other.cdf if hasattr(other, "cdf") else other
        return float(np.max(np.abs(self._cum - np.asarray(cdf(self._x), dtype=float))))

    def metadata(self) -> dict:
        return {"theta": self.theta, "c": self.c, "r": self.r, "seed": self.seed,
                "mean_absorption_target": self.mean_absorption_target,
                "normalization": self.normalization}

    def to_csv(self, path, extra: dict | None = None) -> None:
        from .io import write_table
        write_table(path, {"x": self.grid, "v": self.values}, {**self.metadata(), **(extra or {})})


def default_grid(theta: float, c: float, n: int = DEFAULT_POINTS) -> np.ndarray:
    scale = theta if theta > 0 else max(c, 1e-3)
    return np.linspace(DEFAULT_SPAN / scale / n, DEFAULT_SPAN / scale, n)


def qsd_density_formula(model: LevyTriplet, c: float, r: float, grid=None, n_paths: int = 20000,
                        cfg: PathConfig | None = None) -> QSDensity:
    """QSD with absorption rate ``r`` from the tilted renewal construction.

    ``theta`` is the smaller root of ``psi(theta) - c theta = -r``; the dual
    tilted process has mean ``c - psi'(theta) >= 0`` and ``h`` is the renewal
    function of its descending ladder heights. Raises :class:`NoRoot` when
    ``r > Gamma(c)``.
    """
    theta = levy.qsd_theta(model, c, r)
    cfg = cfg or PathConfig(dt=1e-3, horizon=200.0)
    x = default_grid(theta, c) if grid is None else np.asarray(grid, dtype=float)
    if np.any(x <= 0):
        raise ValueError("grid must lie in (0, inf)")
    dual = levy.dual_tilt(model, theta, c)
    ren = ladder_renewal(dual, x, n_paths, cfg, tag="qsd-ladder")
    v = np.exp(-theta * x) * ren.h
    meta = {"method": "tilted-renewal", "n_ladder_paths": n_paths, "n_heights": int(ren.heights.size),
            "n_censored": ren.n_censored, "dual_mean": float(levy.mean(dual.model)), "dt": cfg.dt}
    return QSDensity(x, v, theta, c, r, meta, cfg.seed)


def qsd_closed_form_brownian(sigma: float, c: float, r: float, grid=None) -> QSDensity:
    """Integrable solution of ``(sigma^2/2) v'' + c v' + r v = 0`` with ``v(0) = 0``."""
    s2 = sigma * sigma
    rmax = c * c / (2 * s2)
    if not (c > 0 and 0 < r <= rmax * (1 + levy.CRITICAL_RTOL)):
        raise RangeError(f"no QSD: need 0 < r <= c^2/(2 sigma^2) = {rmax}")
    disc = max(c * c - 2 * r * s2, 0.0)
    beta = math.sqrt(disc) / s2
    a = c / s2
    theta = (c - math.sqrt(disc)) / s2
    x = default_grid(theta, c) if grid is None else np.asarray(grid, dtype=float)
    if beta <= 1e-12 * a:
        v = x * np.exp(-a * x)
    else:
        v = np.exp(-(a - beta) * x) * -np.expm1(-2 * beta * x) / 2
    return QSDensity(x, v, theta, c, r, {"method": "closed-form", "sigma": sigma, "beta": beta})


def brownian_qsd_cdf(sigma: float, c: float, r: float):
    """Exact CDF of the Brownian QSD on the whole half-line."""
    s2 = sigma * sigma
    a = c / s2
    beta = math.sqrt(max(c * c - 2 * r * s2, 0.0)) / s2
    if beta <= 1e-12 * a:
        return lambda x: stats.gamma.cdf(x, 2, scale=1 / a)
    lo, hi = a - beta, a + beta
    w_lo, w_hi = 1 / lo, 1 / hi

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return ((-np.expm1(-lo * x)) * w_lo - (-np.expm1(-hi * x)) * w_hi) / (w_lo - w_hi)
    return cdf


@dataclass
class QSDReport:
    t: float
    survival: float
    survival_se: float
    survival_target: float
    ks: float
    mean_tau: float
    mean_tau_target: float
    tail_survival: float
    n_paths: int
    n_survivors: int

    @property
    def survival_z(self) -> float:
        if self.survival_se == 0:
            return 0.0 if self.survival == self.survival_target else math.inf
        return abs(self.survival - self.survival_target) / self.survival_se

    @property
    def mean_tau_rel_error(self) -> float:
        return abs(self.mean_tau - self.mean_tau_target) / self.mean_tau_target


def mean_absorption_time(times, survival) -> tuple[float, float]:
    """``int_0^inf S`` from a survival curve on a grid plus a fitted exponential tail.

    Returns ``(estimate, tail_rate)``. The tail rate is the least-squares
    slope of ``log S`` over the second half of the positive part of the curve.
    """
    times = np.asarray(times, dtype=float)
    survival = np.asarray(survival, dtype=float)
    body = float(trapezoid(survival, times))
    s_end = survival[-1]
    if s_end <= 0:
        return body, math.inf
    pos = np.flatnonzero(survival > 0)
    half = pos[pos.size // 2:]
    if half.size < 2:
        return body, math.nan
    rate = -stats.linregress(times[half], np.log(survival[half])).slope
    return body + (s_end / rate if rate > 0 else math.inf), float(rate)


def verify_qsd(model: LevyTriplet, c: float, r: float, nu, t: float, n_paths: int,
               cfg: PathConfig, tag: str = "verify") -> QSDReport:
    """Check the QSD property of ``nu`` by simulation.

    Paths start from ``nu``, run to ``max(t, cfg.horizon)`` and are killed at
    zero. Reported: survival at ``t`` against ``exp(-r t)``, the KS distance
    of the survivors at ``t`` to ``nu``, and the mean absorption time with a
    fitted exponential tail beyond the horizon.
    """
    horizon = max(t, cfg.horizon)
    if horizon == 0:
        return QSDReport(0.0, 1.0, 0.0, 1.0, 0.0, math.nan, 1 / r, 1.0, n_paths, n_paths)
    run = PathConfig(cfg.dt, horizon, cfg.seed, cfg.bridge_correction, cfg.threads, cfg.block_size)
    x0 = nu.sample(stream(cfg.seed, tag + ":init"), n_paths)
    x0 = np.maximum(x0, np.finfo(float).tiny)
    batch = killed_batch(model, c, x0, n_paths, run, record_times=[t] if t > 0 else [], tag=tag)
    mean_tau, _ = mean_absorption_time(batch.times, batch.survival)
    if t == 0:
        # the conditioned law at time zero is nu itself
        return QSDReport(0.0, 1.0, 0.0, 1.0, 0.0, mean_tau, 1 / r, float(batch.survival[-1]),
                         n_paths, n_paths)
    pos, w = batch.snapshot(t)
    if pos.size == 0:
        raise AllAbsorbed(f"no survivor at t={t}")
    ks = EmpiricalDistribution(pos, w).ks(nu)
    k = run.step_index(t)
    return QSDReport(t, float(batch.survival[k]), float(batch.survival_se[k]), math.exp(-r * t), ks,
                     mean_tau, 1 / r, float(batch.survival[-1]), n_paths, int(pos.size))


def survival_decay_rate(model: LevyTriplet, c: float, nu, t0: float, t1: float, n_paths: int,
                        cfg: PathConfig, tag: str = "decay") -> tuple[float, float]:
    """Slope of ``log P_nu(tau > t)`` on ``[t0, t1]`` and its regression SE."""
    run = PathConfig(cfg.dt, t1, cfg.seed, cfg.bridge_correction, cfg.threads, cfg.block_size)
    x0 = np.maximum(nu.sample(stream(cfg.seed, tag + ":init"), n_paths), np.finfo(float).tiny)
    batch = killed_batch(model, c, x0, n_paths, run, tag=tag)
    sel = (batch.times >= t0 - 1e-12) & (batch.survival > 0)
    fit = stats.linregress(batch.times[sel], np.log(batch.survival[sel]))
    return float(fit.slope), float(fit.stderr)


@dataclass
class YaglomStep:
    t: float
    distribution: EmpiricalDistribution
    survival: float
    ks_to_final: float


def yaglom_convergence(model: LevyTriplet, c: float, x0: float, t_schedule, n_paths: int,
                       cfg: PathConfig, tilt="auto") -> tuple[list[YaglomStep], bool]:
    """Conditioned laws along an increasing schedule.

    Returns the steps and a trend flag that is true when the KS distance to
    the last element is nonincreasing along the schedule, up to a
    ``2 / sqrt(n_eff)`` sampling allowance.
    """
    ts = [float(t) for t in t_schedule]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("schedule must be increasing")
    res = [yaglom_mc(model, c, x0, t, n_paths, cfg, tilt=tilt) for t in ts]
    last = res[-1].distribution
    steps = [YaglomStep(y.t, y.distribution, y.survival, 0.0 if i == len(res) - 1 else y.distribution.ks(last))
             for i, y in enumerate(res)]
    slack = 2 / math.sqrt(max(last.n_effective, 1.0))
    ks = [s.ks_to_final for s in steps]
    trend = all(b <= a + slack for a, b in zip(ks, ks[1:]))
    return steps, trend
