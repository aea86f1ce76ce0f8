import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kppqsd import levy
from kppqsd._motion import increments
from kppqsd._rng import stream
from kppqsd.checks import discrete_jump_model, gaussian_jump_model, kou_model
from kppqsd.errors import DomainError, NoRoot, RangeError
from kppqsd.levy import Discrete, DoubleExponential, Gaussian, JumpSpec, LevyTriplet

from oracles import grid_sup

MODELS = {"brownian": levy.brownian(), "kou": kou_model(), "gaussian": gaussian_jump_model(),
          "discrete": discrete_jump_model()}


def inner(model, span=8.0):
    lo, hi = levy.theta_star(model)
    return max(lo, -span) * 0.95, min(hi, span) * 0.95


# -- psi and its derivatives ---------------------------------------------------

def test_psi_brownian_closed_form():
    assert levy.psi(levy.brownian(), 1.0) == pytest.approx(0.5, abs=1e-15)
    assert levy.psi_prime(levy.brownian(), 2.0) == pytest.approx(2.0, abs=1e-15)


@pytest.mark.parametrize("name", MODELS)
def test_psi_at_zero_and_centering(name):
    m = MODELS[name]
    assert levy.psi(m, 0.0) == 0.0
    assert abs(levy.psi_prime(m, 0.0)) < 1e-12


def test_psi_kou_matches_monte_carlo_mgf():
    m = kou_model()
    theta, n = 1.0, 10 ** 6
    x = increments(m, n, 1.0, stream(11, "mgf"))
    e = np.exp(theta * x)
    target = math.exp(levy.psi(m, theta))
    assert abs(e.mean() - target) <= 3 * e.std(ddof=1) / math.sqrt(n)


@pytest.mark.parametrize("name", MODELS)
def test_psi_prime_finite_difference(name):
    m, h = MODELS[name], 1e-5
    for t in np.linspace(*inner(m, 2.0), 7):
        fd = (levy.psi(m, t + h) - levy.psi(m, t - h)) / (2 * h)
        assert levy.psi_prime(m, t) == pytest.approx(fd, abs=1e-6)
        fd2 = (levy.psi_prime(m, t + h) - levy.psi_prime(m, t - h)) / (2 * h)
        assert levy.psi_second(m, t) == pytest.approx(fd2, abs=1e-6)


def test_domain_error_outside_theta_star():
    m = LevyTriplet(0.0, 1.0, JumpSpec(1.0, DoubleExponential(0.5, 3.0, 5.0)))
    assert levy.theta_star(m) == (-5.0, 3.0)
    with pytest.raises(DomainError):
        levy.psi(m, 3.0)
    with pytest.raises(DomainError):
        levy.psi_prime(m, -5.5)


@pytest.mark.parametrize("name", ["brownian", "gaussian", "discrete"])
def test_theta_star_unbounded(name):
    assert levy.theta_star(MODELS[name]) == (-math.inf, math.inf)


def test_from_generator_folds_compensator():
    # jumps of +0.5 (inside the truncation) and +2 (outside)
    jumps = JumpSpec(2.0, Discrete((0.5, 2.0), (0.5, 0.5)))
    m = LevyTriplet.from_generator(0.3, 1.0, jumps)
    assert m.b == pytest.approx(0.3 - 2.0 * 0.25)
    assert m.generator_drift == pytest.approx(0.3)
    theta = 0.7
    direct = 0.3 * theta + theta ** 2 / 2 + 2.0 * (0.5 * math.exp(0.35) + 0.5 * math.exp(1.4) - 1) \
        - theta * 2.0 * 0.25
    assert levy.psi(m, theta) == pytest.approx(direct, abs=1e-13)


# -- centering and reflection ------------------------------------------------------

def test_center_brownian():
    assert levy.center(levy.brownian()) == levy.brownian()
    assert levy.center(levy.brownian(b=0.7)).b == 0.0


def test_center_discrete_monte_carlo_mean():
    raw = LevyTriplet(0.0, 1.0, JumpSpec(1.0, Discrete((1.0, -2.0), (0.8, 0.2))))
    m = levy.center(raw)
    assert m.sigma == raw.sigma and m.jumps == raw.jumps
    assert abs(levy.psi_prime(m, 0.0)) < 1e-12
    n = 10 ** 6
    x = increments(m, n, 1.0, stream(3, "center"))
    assert abs(x.mean()) <= 3 * x.std(ddof=1) / math.sqrt(n)


def test_dual_reflect():
    one = LevyTriplet(0.2, 1.0, JumpSpec(1.0, Discrete((1.0,), (1.0,))))
    refl = levy.dual_reflect(one)
    assert refl.jumps.dist == Discrete((-1.0,), (1.0,))
    assert refl.b == -0.2
    for name, m in MODELS.items():
        assert levy.dual_reflect(levy.dual_reflect(m)) == m
    assert levy.dual_reflect(kou_model()) == kou_model()
    for t in (-1.0, 0.5, 2.0):
        m = gaussian_jump_model()
        assert levy.psi(levy.dual_reflect(m), t) == pytest.approx(levy.psi(m, -t), abs=1e-13)


# -- Legendre transforms ------------------------------------------------------------

@pytest.mark.parametrize("c", [0.1, 0.5, 1.0, 2.0, 5.0])
def test_legendre_brownian(c):
    assert levy.legendre(levy.brownian(), c) == pytest.approx(c * c / 2, abs=1e-10)
    assert levy.legendre(levy.brownian(sigma=2.0), c) == pytest.approx(c * c / 8, abs=1e-10)


def test_legendre_dual_brownian_and_symmetric():
    assert levy.legendre_dual(levy.brownian(), 1.0) == pytest.approx(0.5, abs=1e-12)
    m = kou_model()
    for a in (0.1, 0.5, 2.0):
        assert levy.legendre_dual(m, a) == pytest.approx(levy.legendre(m, a), abs=1e-12)


@pytest.mark.parametrize("name", ["kou", "gaussian", "discrete"])
def test_legendre_grid_search(name):
    m = MODELS[name]
    lo, hi = levy.theta_star(m)
    lo, hi = max(lo + 1e-9, -10), min(hi - 1e-9, 10)
    for a in (0.5, 1.5):
        assert levy.legendre(m, a) == pytest.approx(grid_sup(lambda t: a * t - levy.psi(m, t), lo, hi), abs=1e-6)
        assert levy.legendre_dual(m, a) == pytest.approx(
            grid_sup(lambda t: a * t - levy.psi(m, -t), -hi, -lo), abs=1e-6)


@pytest.mark.parametrize("name", MODELS)
def test_legendre_shape(name):
    m = MODELS[name]
    assert levy.legendre(m, 0.0) == 0.0
    vals = [levy.legendre(m, a) for a in np.linspace(0, 3, 31)]
    assert min(vals) >= 0
    assert all(b >= a - 1e-14 for a, b in zip(vals, vals[1:]))


def test_gamma_inverse():
    assert levy.gamma_inverse(levy.brownian(), 1.0) == pytest.approx(math.sqrt(2), abs=1e-9)
    assert levy.gamma_inverse(levy.brownian(), 0.0) == 0.0
    with pytest.raises(ValueError):
        levy.gamma_inverse(levy.brownian(), -1.0)


def test_gamma_inverse_out_of_range():
    # speeds beyond the bisection bracket are reported, not extrapolated
    with pytest.raises(RangeError):
        levy.gamma_inverse(levy.brownian(), 1e30)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(MODELS)), st.floats(0.01, 4.0))
def test_gamma_inverse_round_trip(name, r):
    m = MODELS[name]
    assert levy.legendre(m, levy.gamma_inverse(m, r)) == pytest.approx(r, abs=1e-8)


# -- qsd_theta -------------------------------------------------------------------------

def test_qsd_theta_brownian():
    m = levy.brownian()
    assert levy.qsd_theta(m, 1.0, 0.5) == pytest.approx(1.0, abs=1e-9)
    assert levy.qsd_theta(m, 1.0, 0.375) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(NoRoot):
        levy.qsd_theta(m, 1.0, 0.6)
    # inside the critical band the double root is returned
    assert levy.qsd_theta(m, 1.0, 0.5 * (1 + 1e-10)) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(MODELS)), st.floats(0.2, 2.0), st.floats(0.02, 0.98))
def test_qsd_theta_residual_and_order(name, c, frac):
    m = MODELS[name]
    g = levy.legendre(m, c)
    r = frac * g
    th = levy.qsd_theta(m, c, r)
    theta_c = levy.legendre_argmax(m, c)
    assert abs(levy.psi(m, th) - c * th + r) < 1e-10
    assert th <= theta_c + 1e-10


# -- tilting ---------------------------------------------------------------------------

def test_esscher_identity_and_brownian_mean():
    m = kou_model()
    t = levy.esscher_tilt(m, 0.0, 0.0)
    assert t.model == m
    assert levy.esscher_tilt(levy.brownian(), 1.0, 0.0).mean() == pytest.approx(1.0)


@pytest.mark.parametrize("name", MODELS)
def test_esscher_mean_and_volatility(name):
    m = MODELS[name]
    for theta in (-0.5, 0.8):
        t = levy.esscher_tilt(m, theta, 0.3)
        assert t.sigma == m.sigma
        assert t.mean() == pytest.approx(levy.psi_prime(m, theta) - 0.3, abs=1e-12)
        d = levy.dual_tilt(m, theta, 0.3)
        assert d.mean() == pytest.approx(0.3 - levy.psi_prime(m, theta), abs=1e-12)


def test_esscher_family_closed_forms():
    de = DoubleExponential(0.4, 3.0, 5.0).tilt(1.0)
    assert (de.eta_plus, de.eta_minus) == (2.0, 6.0)
    g = Gaussian(0.3, 0.5).tilt(2.0)
    assert g.mean_ == pytest.approx(0.3 + 2.0 * 0.25) and g.std == 0.5
    d = Discrete((1.0, -2.0), (0.8, 0.2)).tilt(0.5)
    w = np.array([0.8 * math.exp(0.5), 0.2 * math.exp(-1.0)])
    assert np.allclose(d.probs, w / w.sum())


def test_esscher_kou_monte_carlo_mean():
    m = kou_model()
    t = levy.esscher_tilt(m, 1.0, 0.5)
    n = 10 ** 6
    y = increments(t.model, n, 1.0, stream(5, "tilt"))
    assert abs(y.mean() - (levy.psi_prime(m, 1.0) - 0.5)) <= 3 * y.std(ddof=1) / math.sqrt(n)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(sorted(MODELS)), st.floats(-1.5, 1.5), st.floats(-1.0, 1.0), st.floats(0.0, 2.0))
def test_esscher_semigroup(name, theta, u, c):
    m = MODELS[name]
    lo, hi = levy.theta_star(m)
    if not (lo < theta < hi and lo < theta + u < hi):
        return
    t = levy.esscher_tilt(m, theta, c)
    lhs = levy.psi(t.model, u)
    rhs = levy.psi(m, theta + u) - levy.psi(m, theta) - c * u
    assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(rhs)))


# -- convexity and Fenchel-Young ---------------------------------------------------

@settings(max_examples=80, deadline=None)
@given(st.sampled_from(sorted(MODELS)), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 1))
def test_psi_convex(name, a, b, t):
    m = MODELS[name]
    lo, hi = inner(m, 2.5)
    x, y = lo + (a + 1) / 2 * (hi - lo), lo + (b + 1) / 2 * (hi - lo)
    assert levy.psi(m, t * x + (1 - t) * y) <= t * levy.psi(m, x) + (1 - t) * levy.psi(m, y) + 1e-12


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(sorted(MODELS)), st.floats(0.0, 3.0), st.floats(-1, 1))
def test_fenchel_young(name, alpha, s):
    m = MODELS[name]
    lo, hi = inner(m, 2.5)
    theta = lo + (s + 1) / 2 * (hi - lo)
    g = levy.legendre(m, alpha)
    assert alpha * theta <= levy.psi(m, theta) + g + 1e-10
    star = levy.legendre_argmax(m, alpha)
    assert alpha * star == pytest.approx(levy.psi(m, star) + g, abs=1e-8)


# -- model documents -------------------------------------------------------------

def test_model_from_dict_round_trip():
    for m in MODELS.values():
        assert levy.model_from_dict(m.to_dict()) == m


def test_model_from_dict_center_flag_and_errors():
    doc = {"b": 0.4, "sigma": 1.0, "jump": {"rate": 1.0, "dist": {"type": "gaussian", "mean": 0.3, "std": 0.5}},
           "center": True}
    assert abs(levy.psi_prime(levy.model_from_dict(doc), 0.0)) < 1e-12
    with pytest.raises(ValueError):
        levy.model_from_dict({"b": 0.0})
    with pytest.raises(ValueError):
        levy.model_from_dict({"sigma": 1.0, "jump": {"rate": 1.0, "dist": {"type": "cauchy"}}})
    with pytest.raises(ValueError):
        levy.model_from_dict({"sigma": 0.0})
