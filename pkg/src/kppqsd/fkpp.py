"""Nonlocal F-KPP equation ``u_t = L* u + r (u^2 - u)`` and its traveling waves.

``L*`` is the generator of the dual process ``-X``. On a uniform grid it is
discretised as a monotone stencil: central second differences, upwind first
differences and a jump quadrature whose weights are the expectations of the
lattice hat functions under the jump law (exact for linear functions).
Shifts that leave the grid read the nearest boundary value.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, sparse, stats

from . import levy
from ._rng import block_map, stream
from .branching import BranchingConfig, GWCounts, _branch_step, _steps, gw_counts
from .errors import BlowupError, InsufficientTrace, StabilityError, UndefinedInversion
from .levy import Discrete, DoubleExponential, Gaussian, LevyTriplet

log = logging.getLogger(__name__)

BLOWUP_BAND = 0.05
TAIL_LOG = 37.0  # tails beyond exp(-37) ~ 1e-16 are dropped


def _stop_loss(dist, y):
    """``E (y - Y)^+`` for a jump law."""
    y = np.asarray(y, dtype=float)
    if isinstance(dist, Discrete):
        loc = np.asarray(dist.locations)
        pr = np.asarray(dist.probs)
        return np.maximum(y[..., None] - loc, 0.0) @ pr
    if isinstance(dist, Gaussian):
        z = (y - dist.mean_) / dist.std
        return (y - dist.mean_) * stats.norm.cdf(z) + dist.std * stats.norm.pdf(z)
    if isinstance(dist, DoubleExponential):
        ep, em = dist.eta_plus, dist.eta_minus
        up = np.where(y > 0, y + np.expm1(-ep * np.maximum(y, 0)) / ep, 0.0)
        down = np.where(y >= 0, y + 1 / em, np.exp(em * np.minimum(y, 0)) / em)
        return dist.p * up + (1 - dist.p) * down
    raise TypeError(f"unsupported jump law {type(dist).__name__}")


def jump_weights(dist, dx: float, max_shift: int | None = None) -> tuple[np.ndarray, int]:
    """Lattice weights ``w_k = E hat(Y/dx - k)`` for ``k = -K..K``.

    Returns ``(w, K)``. The weights are nonnegative, sum to one up to the
    truncated tail, and reproduce the mean of ``Y`` exactly.
    """
    if isinstance(dist, Discrete):
        span = max(abs(v) for v in dist.locations) + dx
    elif isinstance(dist, DoubleExponential):
        span = TAIL_LOG / min(dist.eta_plus, dist.eta_minus)
    else:
        span = abs(dist.mean_) + math.sqrt(2 * TAIL_LOG) * dist.std
    K = int(math.ceil(span / dx)) + 1
    if max_shift is not None:
        K = min(K, max_shift)
    k = np.arange(-K - 1, K + 2)
    G = _stop_loss(dist, k * dx)
    w = (G[2:] - 2 * G[1:-1] + G[:-2]) / dx
    return np.maximum(w, 0.0), K


@dataclass
class AdjointOperator:
    """Monotone finite-difference stencil of ``L*`` on a uniform grid.

    ``apply`` acts on full grid vectors; values outside the grid are taken
    equal to the nearest end value.
    """

    grid: np.ndarray
    dx: float
    diffusion: float
    drift: float
    rate: float
    weights: np.ndarray
    K: int

    @property
    def jump_rate(self) -> float:
        """Total off-diagonal jump intensity of a row."""
        if self.rate == 0:
            return 0.0
        return self.rate * float(self.weights.sum() - self.weights[self.K])

    def stable_dt(self, r: float = 0.0) -> float:
        """Largest explicit Euler step that keeps the scheme monotone."""
        return 1.0 / (2 * self.diffusion / self.dx ** 2 + abs(self.drift) / self.dx + self.jump_rate + r)

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        pad = max(1, self.K if self.rate > 0 else 1)
        fp = np.pad(f, pad, mode="edge")
        mid = fp[pad:-pad]
        left, right = fp[pad - 1:-pad - 1], fp[pad + 1:fp.size - pad + 1]
        out = self.diffusion * (left - 2 * mid + right) / self.dx ** 2
        # transport u_t = -b u_x: upwind along the velocity b
        if self.drift > 0:
            out -= self.drift * (mid - left) / self.dx
        elif self.drift < 0:
            out -= self.drift * (right - mid) / self.dx
        if self.rate > 0:
            conv = signal.oaconvolve(fp, self.weights, mode="valid") if self.K > 64 \
                else np.convolve(fp, self.weights, mode="valid")
            out += self.rate * (conv - self.weights.sum() * mid)
        return out

    def matrix(self) -> sparse.csr_matrix:
        """The same operator as a sparse matrix (boundary clamping included)."""
        n = self.grid.size
        i = np.arange(n)
        rows, cols, vals = [], [], []

        def add(shift, coef):
            rows.append(i)
            cols.append(np.clip(i + shift, 0, n - 1))
            vals.append(np.full(n, coef))

        d2 = self.diffusion / self.dx ** 2
        add(-1, d2)
        add(1, d2)
        add(0, -2 * d2)
        if self.drift > 0:
            add(0, -self.drift / self.dx)
            add(-1, self.drift / self.dx)
        elif self.drift < 0:
            add(1, -self.drift / self.dx)
            add(0, self.drift / self.dx)
        if self.rate > 0:
            for j, w in enumerate(self.weights):
                if w > 0:
                    add(-(j - self.K), self.rate * w)
            add(0, -self.rate * self.weights.sum())
        m = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(n, n)).tocsr()
        # put the row-sum rounding on the diagonal so constants map to 0
        m.setdiag(m.diagonal() - np.asarray(m.sum(axis=1)).ravel())
        return m


def uniform_spacing(grid) -> float:
    grid = np.asarray(grid, dtype=float)
    d = np.diff(grid)
    if d.size == 0 or np.any(d <= 0) or np.ptp(d) > 1e-9 * d.mean():
        raise ValueError("grid must be uniform and increasing")
    return float(d.mean())


def discretize_adjoint(model: LevyTriplet, grid) -> AdjointOperator:
    """Stencil of ``L* f = (sigma^2/2) f'' - b f' + rate * E[f(x - Y) - f(x)]``."""
    grid = np.asarray(grid, dtype=float)
    dx = uniform_spacing(grid)
    if model.jumps.active:
        w, K = jump_weights(model.jumps.dist, dx, max_shift=grid.size)
        rate = model.jumps.rate
    else:
        w, K, rate = np.zeros(1), 0, 0.0
    return AdjointOperator(grid, dx, 0.5 * model.sigma ** 2, model.b, rate, w, K)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

@dataclass
class FrontState:
    grid: np.ndarray
    u: np.ndarray
    time: float
    front_trace: list = field(default_factory=list)
    max_clip: float = 0.0

    def trace_array(self) -> np.ndarray:
        return np.array(self.front_trace, dtype=float).reshape(-1, 2)


def front_position(grid, u, level: float = 0.5) -> float:
    """Leftmost point where ``u`` reaches ``level``, linearly interpolated."""
    idx = np.flatnonzero(u >= level)
    if idx.size == 0:
        return math.nan
    i = int(idx[0])
    if i == 0:
        return float(grid[0])
    u0, u1 = u[i - 1], u[i]
    return float(grid[i - 1] + (level - u0) / (u1 - u0) * (grid[i] - grid[i - 1]))


def step_profile(grid, at: float = 0.0) -> np.ndarray:
    return (np.asarray(grid) >= at).astype(float)


def run_front(model: LevyTriplet, r: float, u0, T: float, dt: float, grid,
              output_dt: float = 0.1, op: AdjointOperator | None = None) -> FrontState:
    """Explicit Euler for ``u_t = L* u + r (u^2 - u)``.

    The end values of ``u0`` are held fixed (Dirichlet). The front, the point
    where ``u`` crosses 1/2, is recorded every ``output_dt``.
    """
    grid = np.asarray(grid, dtype=float)
    op = op or discretize_adjoint(model, grid)
    limit = op.stable_dt(r)
    if dt > limit * (1 + 1e-12):
        raise StabilityError(f"dt={dt} exceeds the monotone stability bound {limit:.3g}")
    u = np.asarray(u0, dtype=float).copy()
    if u.shape != grid.shape:
        raise ValueError("u0 and grid differ in shape")
    left, right = u[0], u[-1]
    n_steps = int(round(T / dt))
    every = max(1, int(round(output_dt / dt)))
    trace = [(0.0, front_position(grid, u))]
    max_clip = 0.0
    for k in range(1, n_steps + 1):
        u = u + dt * (op.apply(u) + r * u * (u - 1))
        u[0], u[-1] = left, right
        lo, hi = u.min(), u.max()
        if lo < -BLOWUP_BAND or hi > 1 + BLOWUP_BAND or not np.isfinite(lo + hi):
            raise BlowupError(f"u left [{-BLOWUP_BAND}, {1 + BLOWUP_BAND}] at t={k * dt:.4g}")
        clip = max(-lo, hi - 1, 0.0)
        if clip > 0:
            max_clip = max(max_clip, clip)
            np.clip(u, 0.0, 1.0, out=u)
        if k % every == 0 or k == n_steps:
            trace.append((k * dt, front_position(grid, u)))
    if max_clip > 0:
        log.info("run_front clipped u by at most %.3g", max_clip)
    return FrontState(grid, u, n_steps * dt, trace, max_clip)


@dataclass
class SpeedFit:
    speed: float
    stderr: float
    r2: float
    n_points: int
    intercept: float


def front_speed(trace, window: tuple[float, float] | None = None, min_points: int = 10) -> SpeedFit:
    """Least-squares slope of front position against time.

    By default the fit uses the last half of the trace in time; ``window``
    selects ``t0 <= t <= t1`` instead.
    """
    tr = np.asarray(trace.front_trace if isinstance(trace, FrontState) else trace, dtype=float)
    tr = tr.reshape(-1, 2)
    tr = tr[np.isfinite(tr).all(axis=1)]
    if tr.size == 0:
        raise InsufficientTrace("empty trace")
    t, x = tr[:, 0], tr[:, 1]
    if window is None:
        t0 = 0.5 * (t.min() + t.max())
        sel = t >= t0
    else:
        sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if sel.sum() < min_points:
        raise InsufficientTrace(f"{int(sel.sum())} points in the fit window, need {min_points}")
    fit = stats.linregress(t[sel], x[sel])
    return SpeedFit(float(fit.slope), float(fit.stderr), float(fit.rvalue ** 2), int(sel.sum()),
                    float(fit.intercept))


# ---------------------------------------------------------------------------
# traveling waves from Galton-Watson level counts
# ---------------------------------------------------------------------------

@dataclass
class WaveProfile:
    grid: np.ndarray
    w: np.ndarray
    s: float
    c: float
    r: float
    n_runs: int
    n_undecided: int = 0
    se: np.ndarray | None = None

    def __call__(self, x):
        """Interpolated profile; 1 to the right of the grid, ``w[0]`` to the left."""
        return np.interp(x, self.grid, self.w, left=self.w[0], right=1.0)

    def metadata(self) -> dict:
        return {"s": self.s, "c": self.c, "r": self.r, "n_runs": self.n_runs,
                "n_undecided": self.n_undecided}


def invert_generating_function(counts: GWCounts, s: float, tol: float = 1e-8,
                               lo: float = 1e-12) -> np.ndarray:
    """Solve ``mean(u ** G_x) = s`` for ``u`` at every level by bisection."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    floor = counts.generating_function(np.full(counts.levels.size, lo))
    bad = np.flatnonzero(floor > s)
    if bad.size:
        raise UndefinedInversion(f"s={s} below the generating function at 0+ for levels "
                                 f"{counts.levels[bad].tolist()}")
    a = np.full(counts.levels.size, lo)
    b = np.ones(counts.levels.size)
    while np.max(b - a) > tol:
        m = 0.5 * (a + b)
        above = counts.generating_function(m) > s
        b = np.where(above, m, b)
        a = np.where(above, a, m)
    return 0.5 * (a + b)


def _inversion_se(counts: GWCounts, w: np.ndarray) -> np.ndarray:
    """Delta-method SE of the inverted level from the spread of ``w ** G``."""
    g = np.power(w[None, :], counts.counts)
    n = max(counts.counts.shape[0], 1)
    var = g.var(axis=0, ddof=1) if n > 1 else np.zeros(w.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.mean(counts.counts * np.power(w[None, :], np.maximum(counts.counts - 1, 0)), axis=0)
        se = np.sqrt(var / n) / slope
    return np.where(np.isfinite(se), se, 0.0)


def tw_from_gw(model: LevyTriplet, c: float, r: float, s: float, levels, n_runs: int,
               cfg: BranchingConfig, tag: str = "gw") -> WaveProfile:
    """Wave profile ``w(x)`` with ``E w(x) ** G_x = s`` on ``x >= 0``."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    gamma_c = float(levy.legendre(model, c))
    if r > gamma_c and not levy.is_critical(model, c, r, gamma_c):
        raise ValueError(f"no wave at speed {c}: r={r} > Gamma(c)={gamma_c}")
    counts = gw_counts(model, c, r, levels, n_runs, cfg, tag=tag)
    if counts.counts.shape[0] == 0:
        raise UndefinedInversion("every run was undecided")
    w = invert_generating_function(counts, s)
    return WaveProfile(counts.levels, w, s, c, r, n_runs, counts.n_undecided, _inversion_se(counts, w))


def wave_residual(model: LevyTriplet, c: float, r: float, wave) -> tuple[np.ndarray, float]:
    """Residual of ``L* w + c w' + r w (w - 1)`` on interior nodes and its mean square.

    Nodes whose stencil or jump quadrature reaches past the grid are left out.
    """
    grid = np.asarray(wave.grid, dtype=float)
    w = np.asarray(wave.w, dtype=float)
    op = discretize_adjoint(model, grid)
    res = op.apply(w) + c * np.gradient(w, op.dx) + r * w * (w - 1)
    margin = max(1, op.K if op.rate > 0 else 1)
    interior = res[margin:-margin]
    return interior, float(np.mean(interior ** 2)) if interior.size else math.nan


def align_profiles(a: WaveProfile, b: WaveProfile, n_shifts: int = 2001) -> tuple[float, float]:
    """Shift ``delta`` minimising ``sup |a(x) - b(x + delta)|`` on the overlap.

    Returns ``(delta, distance)``.
    """
    ga, gb = np.asarray(a.grid), np.asarray(b.grid)
    width = ga[-1] - ga[0]
    best = (0.0, math.inf)
    for d in np.linspace(-width / 2, width / 2, n_shifts):
        lo, hi = max(ga[0], gb[0] - d), min(ga[-1], gb[-1] - d)
        if hi - lo < width / 4:
            continue
        x = ga[(ga >= lo) & (ga <= hi)]
        dist = float(np.max(np.abs(np.interp(x, ga, a.w) - np.interp(x + d, gb, b.w))))
        if dist < best[1]:
            best = (float(d), dist)
    return best


@dataclass
class McKeanReport:
    probes: np.ndarray
    w_values: np.ndarray
    products: np.ndarray
    product_se: np.ndarray
    w_se: np.ndarray
    exit_fraction: float
    t: float
    n_runs: int

    @property
    def discrepancy(self) -> np.ndarray:
        return np.abs(self.products - self.w_values)

    @property
    def combined_se(self) -> np.ndarray:
        return np.hypot(self.product_se, self.w_se)

    @property
    def max_discrepancy(self) -> float:
        return float(self.discrepancy.max())

    @property
    def max_z(self) -> float:
        se = self.combined_se
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, self.discrepancy / se, np.where(self.discrepancy > 0, np.inf, 0.0))
        return float(z.max())


def mckean_fixed_point_check(model: LevyTriplet, c: float, r: float, wave, t: float, n_runs: int,
                             cfg: BranchingConfig, probes=None, tag: str = "mckean") -> McKeanReport:
    """Compare ``w(x)`` with ``E prod_i w(x + Z_i(t) + c t)`` for a BLP ``Z`` driven by ``L*``.

    Positions outside the profile grid read ``w[0]`` on the left and 1 on the
    right; the share of particles that did so is reported.
    """
    grid = np.asarray(wave.grid)
    probes = np.linspace(grid[0], grid[-1], 7)[1:-1] if probes is None else np.asarray(probes, float)
    w_at = wave(probes)
    w_se = np.interp(probes, grid, wave.se) if getattr(wave, "se", None) is not None \
        else np.zeros(probes.size)
    if t == 0:
        return McKeanReport(probes, w_at, w_at.copy(), np.zeros(probes.size), w_se, 0.0, 0.0, n_runs)
    dual = levy.dual_reflect(model)
    motion = dual.with_drift(dual.b + c)

    def block(k, s, e):
        rng = stream(cfg.seed, tag, k)
        n = e - s
        x = np.zeros(n)
        run = np.arange(n)
        for _, h in _steps(t, cfg.dt):
            x, run, _, _, _ = _branch_step(motion, x, run, h, r, rng)
        pos = probes[None, :] + x[:, None]
        logw = np.log(np.maximum(wave(pos), 1e-300))
        prod = np.exp(np.stack([np.bincount(run, weights=logw[:, j], minlength=n)
                                for j in range(probes.size)], axis=1))
        exits = np.count_nonzero((pos < grid[0]) | (pos > grid[-1]))
        return prod, exits, pos.size

    parts = block_map(block, n_runs, cfg.block_runs, cfg.threads)
    prod = np.concatenate([p[0] for p in parts], axis=0)
    total = sum(p[2] for p in parts)
    exit_frac = sum(p[1] for p in parts) / total if total else 0.0
    se = prod.std(axis=0, ddof=1) / math.sqrt(n_runs) if n_runs > 1 else np.zeros(probes.size)
    return McKeanReport(probes, w_at, prod.mean(axis=0), se, w_se, float(exit_frac), t, n_runs)
