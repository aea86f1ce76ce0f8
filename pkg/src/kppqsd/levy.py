"""Brownian motion plus compound Poisson jumps: Laplace exponent and friends.

A model is stored in *uncompensated* form,

    psi(theta) = b*theta + sigma**2 * theta**2 / 2 + rate * (M(theta) - 1),

where ``M`` is the moment generating function of the jump law and ``b`` is
the effective drift. For finite activity this is the same object as the
compensated Levy-Khintchine form; :meth:`LevyTriplet.from_generator` does the
conversion from a generator drift that uses the ``|x| < 1`` truncation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from scipy import stats

from .errors import ConvergenceError, DomainError, NoRoot, RangeError

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 200
CRITICAL_RTOL = 1e-9


# ---------------------------------------------------------------------------
# jump laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DoubleExponential:
    """Two-sided exponential jumps (Kou).

    With probability ``p`` a jump is Exp(eta_plus) upwards, otherwise
    Exp(eta_minus) downwards. The MGF is finite on (-eta_minus, eta_plus).
    """

    p: float
    eta_plus: float
    eta_minus: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.eta_plus <= 0 or self.eta_minus <= 0:
            raise ValueError("eta_plus and eta_minus must be positive")

    def domain(self) -> tuple[float, float]:
        return -self.eta_minus, self.eta_plus

    def mgf(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (self.p * self.eta_plus / (self.eta_plus - theta)
                + (1 - self.p) * self.eta_minus / (self.eta_minus + theta))

    def mgf_prime(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (self.p * self.eta_plus / (self.eta_plus - theta) ** 2
                - (1 - self.p) * self.eta_minus / (self.eta_minus + theta) ** 2)

    def mgf_second(self, theta):
        theta = np.asarray(theta, dtype=float)
        return 2 * (self.p * self.eta_plus / (self.eta_plus - theta) ** 3
                    + (1 - self.p) * self.eta_minus / (self.eta_minus + theta) ** 3)

    def mean(self) -> float:
        return self.p / self.eta_plus - (1 - self.p) / self.eta_minus

    def truncated_mean(self) -> float:
        """E[J; |J| < 1]."""
        up = (1 - math.exp(-self.eta_plus) * (1 + self.eta_plus)) / self.eta_plus
        down = (1 - math.exp(-self.eta_minus) * (1 + self.eta_minus)) / self.eta_minus
        return self.p * up - (1 - self.p) * down

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        neg = (1 - self.p) * np.exp(self.eta_minus * np.minimum(x, 0.0))
        pos = (1 - self.p) + self.p * (1 - np.exp(-self.eta_plus * np.maximum(x, 0.0)))
        return np.where(x < 0, neg, pos)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        up = rng.random(n) < self.p
        e = rng.standard_exponential(n)
        return np.where(up, e / self.eta_plus, -e / self.eta_minus)

    def tilt(self, theta: float) -> "DoubleExponential":
        m = float(self.mgf(theta))
        p = self.p * self.eta_plus / (self.eta_plus - theta) / m
        return DoubleExponential(p, self.eta_plus - theta, self.eta_minus + theta)

    def reflect(self) -> "DoubleExponential":
        return DoubleExponential(1 - self.p, self.eta_minus, self.eta_plus)

    def to_dict(self) -> dict:
        return {"type": "double_exp", "p": self.p, "eta_plus": self.eta_plus,
                "eta_minus": self.eta_minus}


@dataclass(frozen=True)
class Gaussian:
    """Normal jump sizes."""

    mean_: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("std must be positive")

    def domain(self) -> tuple[float, float]:
        return -math.inf, math.inf

    def mgf(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.exp(self.mean_ * theta + 0.5 * self.std ** 2 * theta ** 2)

    def mgf_prime(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (self.mean_ + self.std ** 2 * theta) * self.mgf(theta)

    def mgf_second(self, theta):
        theta = np.asarray(theta, dtype=float)
        d = self.mean_ + self.std ** 2 * theta
        return (d * d + self.std ** 2) * self.mgf(theta)

    def mean(self) -> float:
        return self.mean_

    def truncated_mean(self) -> float:
        a = (-1 - self.mean_) / self.std
        b = (1 - self.mean_) / self.std
        return (self.mean_ * (stats.norm.cdf(b) - stats.norm.cdf(a))
                + self.std * (stats.norm.pdf(a) - stats.norm.pdf(b)))

    def cdf(self, x):
        return stats.norm.cdf(x, loc=self.mean_, scale=self.std)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean_ + self.std * rng.standard_normal(n)

    def tilt(self, theta: float) -> "Gaussian":
        return Gaussian(self.mean_ + self.std ** 2 * theta, self.std)

    def reflect(self) -> "Gaussian":
        return Gaussian(-self.mean_, self.std)

    def to_dict(self) -> dict:
        return {"type": "gaussian", "mean": self.mean_, "std": self.std}


@dataclass(frozen=True)
class Discrete:
    """Finitely many jump sizes ``locations`` with ``probs``."""

    locations: tuple
    probs: tuple

    def __post_init__(self):
        loc = tuple(float(v) for v in self.locations)
        pr = tuple(float(v) for v in self.probs)
        if len(loc) != len(pr) or not loc:
            raise ValueError("locations and probs must be non-empty and equally long")
        if min(pr) < 0 or abs(sum(pr) - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "probs", pr)

    @property
    def _arrays(self):
        return np.array(self.locations), np.array(self.probs)

    def domain(self) -> tuple[float, float]:
        return -math.inf, math.inf

    def mgf(self, theta):
        loc, pr = self._arrays
        theta = np.asarray(theta, dtype=float)
        return np.sum(pr * np.exp(np.multiply.outer(theta, loc)), axis=-1)

    def mgf_prime(self, theta):
        loc, pr = self._arrays
        theta = np.asarray(theta, dtype=float)
        return np.sum(pr * loc * np.exp(np.multiply.outer(theta, loc)), axis=-1)

    def mgf_second(self, theta):
        loc, pr = self._arrays
        theta = np.asarray(theta, dtype=float)
        return np.sum(pr * loc ** 2 * np.exp(np.multiply.outer(theta, loc)), axis=-1)

    def mean(self) -> float:
        loc, pr = self._arrays
        return float(pr @ loc)

    def truncated_mean(self) -> float:
        loc, pr = self._arrays
        inside = np.abs(loc) < 1
        return float(pr[inside] @ loc[inside])

    def cdf(self, x):
        loc, pr = self._arrays
        x = np.asarray(x, dtype=float)
        return np.sum(pr * (np.multiply.outer(x, np.ones_like(loc)) >= loc), axis=-1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        loc, pr = self._arrays
        return loc[rng.choice(loc.size, size=n, p=pr)]

    def tilt(self, theta: float) -> "Discrete":
        loc, pr = self._arrays
        w = pr * np.exp(theta * loc)
        w /= w.sum()
        return Discrete(tuple(loc), tuple(w))

    def reflect(self) -> "Discrete":
        loc, pr = self._arrays
        return Discrete(tuple(-loc), tuple(pr))

    def to_dict(self) -> dict:
        return {"type": "discrete", "atoms": [[x, p] for x, p in zip(self.locations, self.probs)]}


JumpDistribution = Union[DoubleExponential, Gaussian, Discrete]


@dataclass(frozen=True)
class JumpSpec:
    """Compound Poisson part: jumps of law ``dist`` at intensity ``rate``."""

    rate: float = 0.0
    dist: JumpDistribution | None = None

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("jump rate must be nonnegative")
        if self.rate > 0 and self.dist is None:
            raise ValueError("a positive jump rate needs a jump distribution")

    @property
    def active(self) -> bool:
        return self.rate > 0


@dataclass(frozen=True)
class LevyTriplet:
    """Levy process ``X_t = b t + sigma W_t + compound Poisson``.

    ``b`` is the effective (uncompensated) drift, so that
    ``E[X_1] = b + rate * E[J]``.
    """

    b: float
    sigma: float
    jumps: JumpSpec = JumpSpec()

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def from_generator(cls, b: float, sigma: float, jumps: JumpSpec = JumpSpec()) -> "LevyTriplet":
        """Build from the drift of the compensated generator (|y| < 1 truncation)."""
        comp = jumps.rate * jumps.dist.truncated_mean() if jumps.active else 0.0
        return cls(b - comp, sigma, jumps)

    @property
    def generator_drift(self) -> float:
        comp = self.jumps.rate * self.jumps.dist.truncated_mean() if self.jumps.active else 0.0
        return self.b + comp

    def with_drift(self, b: float) -> "LevyTriplet":
        return replace(self, b=float(b))

    def is_symmetric(self, tol: float = 1e-14) -> bool:
        if abs(self.b) > tol:
            return False
        if not self.jumps.active:
            return True
        return self.jumps.dist.reflect() == self.jumps.dist

    def to_dict(self) -> dict:
        """Document in the model-file schema (with generator-form drift)."""
        jump = {"rate": self.jumps.rate}
        if self.jumps.active:
            jump["dist"] = self.jumps.dist.to_dict()
        return {"b": self.generator_drift, "sigma": self.sigma, "jump": jump}


@dataclass(frozen=True)
class TiltedModel:
    """A model after exponential tilting by ``theta`` and shift by ``-c*t``.

    ``model`` is the law of ``X_t - c t`` under the tilted measure, or of its
    negative when ``reflected`` is set.
    """

    base: LevyTriplet
    theta: float
    c: float
    model: LevyTriplet
    reflected: bool = False

    @property
    def drift(self) -> float:
        return self.model.b

    @property
    def sigma(self) -> float:
        return self.model.sigma

    @property
    def jumps(self) -> JumpSpec:
        return self.model.jumps

    def mean(self) -> float:
        """Unit-time mean of the tilted (possibly reflected) process."""
        return psi_prime(self.model, 0.0)


# ---------------------------------------------------------------------------
# Laplace exponent
# ---------------------------------------------------------------------------

def theta_star(model: LevyTriplet) -> tuple[float, float]:
    """Endpoints of the interval on which psi is finite."""
    if not model.jumps.active:
        return -math.inf, math.inf
    return model.jumps.dist.domain()


def _check_domain(model: LevyTriplet, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    lo, hi = theta_star(model)
    if np.any(theta <= lo) or np.any(theta >= hi) or np.any(np.isnan(theta)):
        raise DomainError(f"theta={theta} outside ({lo}, {hi})")
    return theta


def _out(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def psi(model: LevyTriplet, theta):
    """Laplace exponent, ``log E exp(theta X_1)``."""
    theta = _check_domain(model, theta)
    val = model.b * theta + 0.5 * model.sigma ** 2 * theta ** 2
    if model.jumps.active:
        val = val + model.jumps.rate * (model.jumps.dist.mgf(theta) - 1.0)
    return _out(val)


def psi_prime(model: LevyTriplet, theta):
    theta = _check_domain(model, theta)
    val = model.b + model.sigma ** 2 * theta
    if model.jumps.active:
        val = val + model.jumps.rate * model.jumps.dist.mgf_prime(theta)
    return _out(val)


def psi_second(model: LevyTriplet, theta):
    theta = _check_domain(model, theta)
    val = model.sigma ** 2 + 0.0 * theta
    if model.jumps.active:
        val = val + model.jumps.rate * model.jumps.dist.mgf_second(theta)
    return _out(val)


def mean(model: LevyTriplet) -> float:
    return psi_prime(model, 0.0)


def variance(model: LevyTriplet) -> float:
    return psi_second(model, 0.0)


def center(model: LevyTriplet) -> LevyTriplet:
    """Shift the drift so that ``E[X_1] = 0``."""
    jm = model.jumps.rate * model.jumps.dist.mean() if model.jumps.active else 0.0
    return model.with_drift(-jm)


def dual_reflect(model: LevyTriplet) -> LevyTriplet:
    """Triplet of ``-X``."""
    jumps = model.jumps
    if jumps.active:
        jumps = JumpSpec(jumps.rate, jumps.dist.reflect())
    return LevyTriplet(-model.b, model.sigma, jumps)


def esscher_tilt(model: LevyTriplet, theta: float, c: float = 0.0) -> TiltedModel:
    """Law of ``X_t - c t`` under ``dQ/dP = exp(theta X_t - psi(theta) t)``.

    Drift moves by ``sigma**2 * theta``, the jump intensity becomes
    ``rate * M(theta)`` and the jump law is reweighted by ``exp(theta x)``.
    """
    _check_domain(model, theta)
    b = model.b + model.sigma ** 2 * theta - c
    jumps = model.jumps
    if jumps.active:
        jumps = JumpSpec(jumps.rate * float(jumps.dist.mgf(theta)), jumps.dist.tilt(theta))
    return TiltedModel(model, float(theta), float(c), LevyTriplet(b, model.sigma, jumps))


def dual_tilt(model: LevyTriplet, theta: float, c: float) -> TiltedModel:
    """Reflection of :func:`esscher_tilt`: mean ``c - psi'(theta)``."""
    t = esscher_tilt(model, theta, c)
    return TiltedModel(model, t.theta, t.c, dual_reflect(t.model), reflected=True)


# ---------------------------------------------------------------------------
# convex conjugates
# ---------------------------------------------------------------------------

def _solve_increasing(g, dg, lo_dom, hi_dom, target, start=0.0):
    """Solve ``g(x) = target`` for increasing ``g`` on (lo_dom, hi_dom).

    Returns ``(x, at_endpoint)``; ``at_endpoint`` is +1/-1 when g stays on one
    side of ``target`` all the way to a finite endpoint.
    """
    f0 = g(start) - target
    if f0 == 0.0:
        return start, 0
    direction = 1.0 if f0 < 0 else -1.0
    end = hi_dom if direction > 0 else lo_dom
    a, step = start, 1.0
    for _ in range(2000):
        if math.isfinite(end):
            cand = a + direction * min(step, abs(end - a) / 2)
            if abs(end - cand) < 1e-15 * max(1.0, abs(end)):
                return end, int(direction)
        else:
            cand = a + direction * step
            if abs(cand) > 1e12:
                return end, int(direction)
        if direction * (g(cand) - target) >= 0:
            break
        a, step = cand, step * 2.0
    else:
        return end, int(direction)
    lo, hi = (a, cand) if direction > 0 else (cand, a)
    x = 0.5 * (lo + hi)
    for _ in range(NEWTON_MAXITER):
        fx = g(x) - target
        if fx > 0:
            hi = x
        else:
            lo = x
        d = dg(x)
        nx = x - fx / d if d > 0 else 0.5 * (lo + hi)
        if not lo < nx < hi:
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= NEWTON_TOL * max(1.0, abs(x)) or hi - lo <= NEWTON_TOL * max(1.0, abs(x)):
            return nx, 0
        x = nx
    raise ConvergenceError(f"no convergence solving for target {target}")


def _conjugate(model: LevyTriplet, alpha: float, reflected: bool) -> tuple[float, float]:
    s = -1.0 if reflected else 1.0
    lo, hi = theta_star(model)
    if reflected:
        lo, hi = -hi, -lo

    def f(t):
        return psi(model, s * t)

    def g(t):
        return s * psi_prime(model, s * t)

    def dg(t):
        return psi_second(model, s * t)

    theta, end = _solve_increasing(g, dg, lo, hi, alpha)
    if end and not math.isfinite(theta):
        return math.inf, theta
    if end:
        # supremum approached at a finite endpoint with bounded psi'
        eps = 1e-12 * max(1.0, abs(theta))
        t_in = theta - end * eps
        return alpha * theta - f(t_in), theta
    return alpha * theta - f(theta), theta


def legendre(model: LevyTriplet, alpha):
    """``Gamma(alpha) = sup_theta alpha*theta - psi(theta)``."""
    if np.ndim(alpha):
        return np.array([_conjugate(model, float(a), False)[0] for a in np.ravel(alpha)]).reshape(np.shape(alpha))
    return _conjugate(model, float(alpha), False)[0]


def legendre_argmax(model: LevyTriplet, alpha: float) -> float:
    """The maximiser ``theta`` with ``psi'(theta) = alpha``."""
    return _conjugate(model, float(alpha), False)[1]


def legendre_dual(model: LevyTriplet, alpha):
    """Conjugate of ``theta -> psi(-theta)``, the exponent of ``-X``."""
    if np.ndim(alpha):
        return np.array([_conjugate(model, float(a), True)[0] for a in np.ravel(alpha)]).reshape(np.shape(alpha))
    return _conjugate(model, float(alpha), True)[0]


def gamma_inverse(model: LevyTriplet, r: float, tol: float = 1e-10) -> float:
    """The speed ``c >= 0`` with ``Gamma(c) = r``, by bisection."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while (g := legendre(model, hi)) < r:
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            raise RangeError(f"r={r} exceeds the range of Gamma")
    if not math.isfinite(g):
        raise RangeError(f"r={r} exceeds the range of Gamma")
    while hi - lo > tol * 1e-2 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if legendre(model, mid) < r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def is_critical(model: LevyTriplet, c: float, r: float, gamma_c: float | None = None) -> bool:
    g = legendre(model, c) if gamma_c is None else gamma_c
    return abs(r - g) <= CRITICAL_RTOL * max(1.0, r)


def qsd_theta(model: LevyTriplet, c: float, r: float) -> float:
    """Smaller root of ``psi(theta) - c*theta = -r``.

    Raises :class:`NoRoot` when ``r > Gamma(c)``. In the critical band the
    double root ``theta_c`` (with ``psi'(theta_c) = c``) is returned.
    """
    if c <= 0 or r <= 0:
        raise ValueError("c and r must be positive")
    theta_c = legendre_argmax(model, c)
    gamma_c = c * theta_c - psi(model, theta_c)
    if is_critical(model, c, r, gamma_c):
        return theta_c
    if r > gamma_c:
        raise NoRoot(f"r={r} > Gamma(c)={gamma_c} for c={c}")

    def shifted(t):
        return psi(model, t) - c * t + r

    # shifted(0) = r > 0, shifted(theta_c) = r - Gamma(c) < 0, decreasing between
    lo, hi = min(0.0, theta_c), theta_c
    while shifted(lo) <= 0:
        lo = lo - 1.0
    for _ in range(NEWTON_MAXITER):
        mid = 0.5 * (lo + hi)
        if shifted(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(mid)):
            break
    # polish with Newton (the slope is bounded away from zero off-critical)
    t = 0.5 * (lo + hi)
    for _ in range(3):
        d = psi_prime(model, t) - c
        if d == 0:
            break
        nt = t - shifted(t) / d
        if lo - 1e-12 <= nt <= hi + 1e-12:
            t = nt
    return t


def model_from_dict(doc: dict) -> LevyTriplet:
    """Parse the JSON model schema ``{"b", "sigma", "jump": {...}, "center"}``."""
    try:
        b = float(doc.get("b", 0.0))
        sigma = float(doc["sigma"])
    except KeyError as err:
        raise ValueError(f"model document missing field {err}") from None
    jump = doc.get("jump") or {}
    rate = float(jump.get("rate", 0.0))
    dist = None
    if rate > 0 or "dist" in jump:
        d = jump.get("dist")
        if d is None:
            raise ValueError("jump.dist is required when jump.rate > 0")
        kind = d.get("type")
        if kind == "double_exp":
            dist = DoubleExponential(float(d["p"]), float(d["eta_plus"]), float(d["eta_minus"]))
        elif kind == "gaussian":
            dist = Gaussian(float(d["mean"]), float(d["std"]))
        elif kind == "discrete":
            atoms = d["atoms"]
            dist = Discrete(tuple(a[0] for a in atoms), tuple(a[1] for a in atoms))
        else:
            raise ValueError(f"unknown jump distribution type {kind!r}")
    model = LevyTriplet.from_generator(b, sigma, JumpSpec(rate, dist) if rate > 0 else JumpSpec())
    if doc.get("center", False):
        model = center(model)
    return model


def brownian(sigma: float = 1.0, b: float = 0.0) -> LevyTriplet:
    return LevyTriplet(b, sigma)


