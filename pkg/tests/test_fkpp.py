import math

import numpy as np
import pytest

from kppqsd import fkpp, levy
from kppqsd.branching import BranchingConfig, GWCounts, extinction_scan, gw_counts
from kppqsd.checks import discrete_jump_model, gaussian_jump_model, kou_model
from kppqsd.errors import BlowupError, InsufficientTrace, NoRoot, StabilityError, UndefinedInversion
from kppqsd.fkpp import WaveProfile
from kppqsd.qsd import qsd_density_formula
from kppqsd.paths import PathConfig

import oracles

BM = levy.brownian()
JUMPS = {"kou": kou_model(), "gaussian": gaussian_jump_model(), "discrete": discrete_jump_model()}
ALL = {"brownian": BM, **JUMPS}


# -- the adjoint operator -------------------------------------------------------------

@pytest.mark.parametrize("name", ALL)
def test_adjoint_kills_constants(name):
    x = np.arange(-20.0, 20.0, 0.05)
    op = fkpp.discretize_adjoint(ALL[name], x)
    assert np.max(np.abs(op.apply(np.ones_like(x)))) <= 1e-12
    assert np.max(np.abs(op.apply(np.full_like(x, 3.7)))) <= 1e-12


@pytest.mark.parametrize("name", ALL)
def test_adjoint_on_linear_functions(name):
    x = np.arange(-20.0, 20.0, 0.05)
    op = fkpp.discretize_adjoint(ALL[name], x)
    m = max(op.K, 1)
    out = op.apply(x)[m:-m]
    # L* x = -E[X_1] = 0 for centered models; the hat quadrature is exact on linear functions
    assert np.max(np.abs(out)) <= 1e-9


@pytest.mark.parametrize("name", ["brownian", "kou"])
def test_adjoint_exponential_eigenfunction_symmetric(name):
    m, theta = ALL[name], 0.7
    x = np.arange(-20.0, 20.0, 0.01)
    op = fkpp.discretize_adjoint(m, x)
    f = np.exp(theta * x)
    k = max(op.K, 1)
    ratio = (op.apply(f) / f)[k:-k]
    assert np.max(np.abs(ratio / levy.psi(m, theta) - 1)) <= 0.01


@pytest.mark.parametrize("name", ["gaussian", "discrete"])
def test_adjoint_exponential_eigenfunction_asymmetric(name):
    # the adjoint carries the exponent of the reflected process
    m, theta = ALL[name], 0.7
    x = np.arange(-20.0, 20.0, 0.01)
    op = fkpp.discretize_adjoint(m, x)
    f = np.exp(theta * x)
    k = max(op.K, 1)
    ratio = (op.apply(f) / f)[k:-k]
    assert np.max(np.abs(ratio / levy.psi(m, -theta) - 1)) <= 0.01


@pytest.mark.parametrize("name", ALL)
def test_adjoint_matrix_matches_apply(name):
    x = np.arange(-10.0, 10.0, 0.1)
    op = fkpp.discretize_adjoint(ALL[name], x)
    f = np.sin(x) + 0.1 * x ** 2
    assert np.allclose(op.matrix() @ f, op.apply(f), atol=1e-10)
    off = op.matrix().toarray() - np.diag(np.diag(op.matrix().toarray()))
    assert off.min() >= 0


@pytest.mark.parametrize("name", JUMPS)
def test_jump_weights(name):
    dist = JUMPS[name].jumps.dist
    w, K = fkpp.jump_weights(dist, 0.05)
    assert np.all(w >= 0)
    # second differences of an O(span) function divided by dx lose a few digits
    assert w.sum() == pytest.approx(1.0, abs=1e-10)
    k = np.arange(-K, K + 1) * 0.05
    assert w @ k == pytest.approx(dist.mean(), abs=1e-10)


def test_nonuniform_grid_rejected():
    with pytest.raises(ValueError):
        fkpp.discretize_adjoint(BM, np.array([0.0, 1.0, 3.0]))


# -- time stepping ------------------------------------------------------------------------

def small_grid():
    return np.arange(-20.0, 40.0, 0.1)


@pytest.mark.parametrize("value", [0.0, 1.0])
def test_constant_states_are_stationary(value):
    x = small_grid()
    op = fkpp.discretize_adjoint(kou_model(), x)
    st = fkpp.run_front(kou_model(), 1.0, np.full_like(x, value), 2.0, 0.9 * op.stable_dt(1.0), x, op=op)
    assert np.max(np.abs(st.u - value)) <= 1e-12


def test_stability_and_blowup_errors():
    x = small_grid()
    op = fkpp.discretize_adjoint(BM, x)
    with pytest.raises(StabilityError):
        fkpp.run_front(BM, 1.0, fkpp.step_profile(x), 1.0, 1.5 * op.stable_dt(1.0), x, op=op)
    with pytest.raises(BlowupError):
        fkpp.run_front(BM, 1.0, np.full_like(x, 1.2), 5.0, 0.9 * op.stable_dt(1.0), x, op=op)


@pytest.mark.parametrize("name", ALL)
def test_scheme_preserves_order_and_monotonicity(name):
    m = ALL[name]
    x = small_grid()
    op = fkpp.discretize_adjoint(m, x)
    dt = 0.9 * op.stable_dt(1.0)
    rng = np.random.default_rng(1)
    for _ in range(3):
        a = np.clip(np.cumsum(rng.random(x.size)) / x.size * 2 - 0.5, 0, 1)
        b = np.minimum(a + rng.random(x.size) * 0.3, 1.0)
        ua = fkpp.run_front(m, 1.0, a, 2.0, dt, x, op=op).u
        ub = fkpp.run_front(m, 1.0, b, 2.0, dt, x, op=op).u
        assert np.all(ua <= ub + 1e-14)
        assert np.all(np.diff(ua) >= -1e-14)
        assert ua.min() >= 0 and ua.max() <= 1


def test_front_moves_right_and_trace_is_recorded():
    x = small_grid()
    st = fkpp.run_front(BM, 1.0, fkpp.step_profile(x), 5.0, 0.004, x, output_dt=0.1)
    tr = st.trace_array()
    assert tr.shape == (51, 2)
    assert abs(tr[0, 1]) <= 0.1 and np.all(np.diff(tr[:, 1]) > 0)


# -- speed fits ---------------------------------------------------------------------------

def test_front_speed_exact_line():
    t = np.linspace(0, 10, 101)
    fit = fkpp.front_speed(np.column_stack([t, 1.4 * t + 3.0]))
    assert fit.speed == pytest.approx(1.4, abs=1e-12)
    assert fit.n_points == 51 and fit.r2 == pytest.approx(1.0)


def test_front_speed_noisy_line():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 10, 401)
    fit = fkpp.front_speed(np.column_stack([t, 1.4 * t + rng.normal(0, 0.2, t.size)]))
    assert abs(fit.speed - 1.4) <= 3 * fit.stderr


def test_front_speed_needs_points():
    with pytest.raises(InsufficientTrace):
        fkpp.front_speed(np.array([[0.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(InsufficientTrace):
        fkpp.front_speed(np.column_stack([np.arange(40.0), np.arange(40.0)]), window=(100, 200))


def test_front_speed_brownian_and_jump_models():
    x = np.arange(-40.0, 120.0, 0.1)
    for m in (BM, kou_model()):
        speeds = []
        for r in (0.5, 1.0):
            op = fkpp.discretize_adjoint(m, x)
            st = fkpp.run_front(m, r, fkpp.step_profile(x), 40.0, 0.9 * op.stable_dt(r), x, op=op)
            fit = fkpp.front_speed(st, window=(20, 40))
            target = levy.gamma_inverse(m, r)
            assert abs(fit.speed / target - 1) <= 0.08
            assert fit.speed < target  # the front lags the asymptotic speed
            speeds.append(fit.speed)
        assert speeds[0] < speeds[1]


# -- traveling waves ---------------------------------------------------------------------

LEVELS = np.arange(0.0, 4.5001, 0.05)


@pytest.fixture(scope="module")
def critical_wave():
    cfg = BranchingConfig(cap=10 ** 6, t_max=200.0, dt=0.2, seed=3)
    return fkpp.tw_from_gw(BM, math.sqrt(2), 1.0, 0.5, LEVELS, 10_000, cfg)


def test_wave_basic_shape(critical_wave):
    w = critical_wave
    assert w.w[0] == pytest.approx(0.5, abs=1e-8)
    assert np.all(np.diff(w.w) >= 0)
    assert np.all((w.w > 0) & (w.w <= 1))
    assert w.w[-1] > 0.95
    assert w(100.0) == 1.0 and w(-1.0) == w.w[0]


def test_wave_matches_ode_profile(critical_wave):
    w = critical_wave
    exact = oracles.brownian_wave(math.sqrt(2), 1.0, 0.5, x=w.grid)
    z = np.abs(w.w - exact)[1:] / w.se[1:]
    assert np.max(z) <= 4.0
    assert np.max(np.abs(w.w - exact)) <= 0.02


def test_wave_residual_vanishes_on_exact_profile():
    x = np.arange(-5.0, 5.0, 0.01)
    exact = WaveProfile(x, oracles.brownian_wave(math.sqrt(2), 1.0, 0.5, x=x), 0.5, math.sqrt(2), 1.0, 0)
    _, ms = fkpp.wave_residual(BM, math.sqrt(2), 1.0, exact)
    assert ms <= 1e-5


def test_wave_level_changes_are_translations(critical_wave):
    cfg = BranchingConfig(cap=10 ** 6, t_max=200.0, dt=0.2, seed=4)
    other = fkpp.tw_from_gw(BM, math.sqrt(2), 1.0, 0.3, LEVELS, 10_000, cfg)
    delta, dist = fkpp.align_profiles(critical_wave, other)
    assert dist <= 0.05
    # other(x + delta) = wave(x): delta is minus the point where the s = 1/2 wave equals 0.3
    xs = np.linspace(-3, 0, 30001)
    exact = oracles.brownian_wave(math.sqrt(2), 1.0, 0.5, x=xs)
    assert delta == pytest.approx(-xs[np.searchsorted(exact, 0.3)], abs=0.1)


def test_wave_inversion_guards():
    levels = np.array([0.0, 1.0, 2.0])
    # half the runs with no lineage at level 2: E u^G >= 1/2 for every u
    counts = GWCounts(levels, np.array([[1, 1, 0], [1, 2, 3]] * 50), 0, 100)
    with pytest.raises(UndefinedInversion):
        fkpp.invert_generating_function(counts, 0.4)
    assert fkpp.invert_generating_function(counts, 0.6)[2] > 0
    with pytest.raises(ValueError):
        fkpp.tw_from_gw(BM, 1.0, 0.8, 0.5, levels, 10, BranchingConfig())
    with pytest.raises(ValueError):
        fkpp.tw_from_gw(BM, 1.0, 0.3, 1.5, levels, 10, BranchingConfig())


def test_identity_generating_function_at_zero():
    counts = gw_counts(BM, 1.0, 0.3, [0.0, 0.5], 50, BranchingConfig(dt=0.2, seed=6))
    w = fkpp.invert_generating_function(counts, 0.37)
    assert w[0] == pytest.approx(0.37, abs=1e-8)


def test_mckean_trivial_cases(critical_wave):
    cfg = BranchingConfig(dt=0.05, seed=7)
    rep = fkpp.mckean_fixed_point_check(BM, math.sqrt(2), 1.0, critical_wave, 0.0, 100, cfg)
    assert rep.max_discrepancy == 0.0
    ones = WaveProfile(LEVELS, np.ones_like(LEVELS), 0.5, math.sqrt(2), 1.0, 0)
    rep = fkpp.mckean_fixed_point_check(BM, math.sqrt(2), 1.0, ones, 0.5, 2000, cfg)
    assert np.all(rep.products == 1.0) and rep.max_discrepancy == 0.0


def test_mckean_on_exact_wave():
    x = np.arange(-6.0, 10.0, 0.01)
    exact = WaveProfile(x, oracles.brownian_wave(math.sqrt(2), 1.0, 0.5, x=x), 0.5, math.sqrt(2), 1.0, 0)
    rep = fkpp.mckean_fixed_point_check(BM, math.sqrt(2), 1.0, exact, 0.5, 40_000,
                                        BranchingConfig(dt=0.05, seed=8), probes=[-1.0, 0.0, 1.0, 2.0])
    assert rep.max_z <= 3
    assert rep.exit_fraction < 1e-3


def test_equivalence_harness():
    """Extinction, QSD existence and wave decidability agree with the sign of Gamma(c) - r."""
    bcfg = BranchingConfig(cap=5000, t_max=40.0, dt=0.2, seed=9)
    levels = np.arange(0.0, 2.01, 0.25)
    for c, r in [(1.0, 0.3), (1.0, 0.8), (1.5, 0.6), (1.5, 1.4)]:
        g = levy.legendre(BM, c)
        sub = r < g
        scan = extinction_scan(BM, c, r, 5.0, 100, bcfg)
        assert scan.classification == ("extinct" if sub else "survives")
        try:
            qsd_density_formula(BM, c, r, n_paths=50, cfg=PathConfig(dt=0.01, horizon=20.0, seed=9))
            exists = True
        except NoRoot:
            exists = False
        assert exists == sub
        counts = gw_counts(BM, c, r, levels, 100, bcfg)
        assert (counts.n_undecided == 0) == sub
