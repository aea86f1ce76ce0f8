"""Exact-in-law motion of many independent particles over given durations.

Jumps are placed at their exact (uniform order-statistic) times inside each
interval. Between jumps the motion is Brownian with drift, and the running
extremum of every diffusive piece is drawn from the exact law of the
Brownian-bridge extremum given the piece endpoints. Barrier crossings are
therefore detected without discretisation bias; only the reported crossing
*time* is rounded up to the end of the piece where it happened.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .levy import LevyTriplet


class Move(NamedTuple):
    x: np.ndarray
    ext: np.ndarray | None
    t_cross: np.ndarray | None


def increments(model: LevyTriplet, shape, dt: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. increments of ``X`` over a step ``dt`` (drift ``model.b``)."""
    z = model.b * dt + model.sigma * np.sqrt(dt) * rng.standard_normal(shape)
    if model.jumps.active:
        k = rng.poisson(model.jumps.rate * dt, size=z.shape)
        total = int(k.sum())
        if total:
            owners = np.repeat(np.arange(k.size), k.ravel())
            sizes = model.jumps.dist.sample(rng, total)
            z += np.bincount(owners, weights=sizes, minlength=k.size).reshape(z.shape)
    return z


def _piece(model, a, length, rng, track):
    sd = model.sigma * np.sqrt(length)
    b = a + model.b * length + sd * rng.standard_normal(a.size)
    if track is None:
        return b, None
    spread = np.sqrt((b - a) ** 2 + 2.0 * model.sigma ** 2 * length * rng.standard_exponential(a.size))
    if track == "min":
        return b, 0.5 * (a + b - spread)
    return b, 0.5 * (a + b + spread)


def advance(model: LevyTriplet, x, h, rng: np.random.Generator, track: str | None = None,
            level: float = 0.0) -> Move:
    """Move particles at ``x`` for durations ``h``.

    ``track`` is ``"min"``, ``"max"`` or ``None``. When tracking, ``ext`` is
    the running extremum over the interval and ``t_cross`` the offset of the
    end of the first piece whose extremum reached ``level`` (``inf`` if none).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    out = np.empty(n)
    ext = np.empty(n) if track else None
    tc = np.full(n, np.inf) if track else None
    if track == "min":
        better, crossed = np.minimum, (lambda e: e <= level)
    else:
        better, crossed = np.maximum, (lambda e: e >= level)

    if model.jumps.active:
        k = rng.poisson(model.jumps.rate * h)
    else:
        k = np.zeros(n, dtype=np.int64)
    plain = np.flatnonzero(k == 0)
    if plain.size:
        xe, ee = _piece(model, x[plain], h[plain], rng, track)
        out[plain] = xe
        if track:
            ext[plain] = ee
            tc[plain] = np.where(crossed(ee), h[plain], np.inf)

    jumpy = np.flatnonzero(k > 0)
    if jumpy.size:
        kk = k[jumpy]
        hh = h[jumpy]
        m = int(kk.max())
        u = rng.random((jumpy.size, m)) * hh[:, None]
        pad = np.arange(m)[None, :] >= kk[:, None]
        u[pad] = np.broadcast_to(hh[:, None], u.shape)[pad]
        u.sort(axis=1)
        times = np.concatenate([np.zeros((jumpy.size, 1)), u, hh[:, None]], axis=1)
        pos = x[jumpy].copy()
        e = pos.copy() if track else None
        t = np.full(jumpy.size, np.inf) if track else None
        for j in range(m + 1):
            length = times[:, j + 1] - times[:, j]
            pos, pe = _piece(model, pos, length, rng, track)
            if track:
                e = better(e, pe)
                t = np.where(np.isinf(t) & crossed(pe), times[:, j + 1], t)
            if j < m:
                has = np.flatnonzero(j < kk)
                pos[has] += model.jumps.dist.sample(rng, has.size)
                if track:
                    e[has] = better(e[has], pos[has])
                    hit = has[np.isinf(t[has]) & crossed(pos[has])]
                    t[hit] = times[hit, j + 1]
        out[jumpy] = pos
        if track:
            ext[jumpy] = e
            tc[jumpy] = t
    return Move(out, ext, tc)
