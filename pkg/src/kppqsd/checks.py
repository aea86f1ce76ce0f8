"""Acceptance checks: each returns a :class:`CheckResult` with its numbers.

Two budgets are provided. ``FULL`` runs every check at its stated sample
sizes (tens of minutes in total); ``QUICK`` shrinks the Monte Carlo budgets
for smoke runs and for the thread-determinism comparison, where only
reproducibility matters.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import fkpp, levy, qsd
from ._motion import increments
from ._rng import stream
from .branching import BranchingConfig, extinction_scan, many_to_one_check, max_speed_estimate
from .errors import NoRoot
from .levy import Discrete, DoubleExponential, Gaussian, JumpSpec, LevyTriplet
from .paths import PathConfig, yaglom_mc

SQRT2 = math.sqrt(2.0)


def kou_model() -> LevyTriplet:
    """Centered, symmetric double-exponential jumps: rate 1, eta = 3, sigma = 1."""
    return levy.center(LevyTriplet(0.0, 1.0, JumpSpec(1.0, DoubleExponential(0.5, 3.0, 3.0))))


def gaussian_jump_model() -> LevyTriplet:
    return levy.center(LevyTriplet(0.0, 1.0, JumpSpec(0.5, Gaussian(0.3, 0.5))))


def discrete_jump_model() -> LevyTriplet:
    return levy.center(LevyTriplet(0.0, 1.0, JumpSpec(1.0, Discrete((1.0, -2.0), (0.8, 0.2)))))


PHASE_C = (0.5, 0.75, 1.0, 1.25, 1.5)
PHASE_R = (0.1, 0.3, 0.6, 0.8, 1.4)
PHASE_X0 = 5.0
OFF_CRITICAL = 0.05


@dataclass(frozen=True)
class Profile:
    name: str
    girsanov_n: int
    m2o_n: int
    speed_runs: int
    speed_t: float
    speed_keep: int
    phase_c: tuple
    phase_r: tuple
    phase_runs: int
    phase_cap: int
    phase_dt: float
    exist_ladder: int
    ladder_n: int
    qsd_n: int
    qsd_dt: float
    yaglom_n: int
    yaglom_dt: float
    front_dx: float
    front_domain: tuple
    front_T: float
    front_window: tuple
    wave_runs: int
    wave_dx: float
    wave_top: float
    mckean_runs: int
    path_block: int
    run_block: int


FULL = Profile("full", 10 ** 6, 10 ** 5, 200, 20.0, 1000, PHASE_C, PHASE_R, 200, 50_000, 0.2, 200,
               20_000, 10 ** 6, 0.01, 10 ** 6, 0.01, 0.05, (-100.0, 300.0), 40.0, (20.0, 40.0),
               20_000, 0.05, 4.5, 10 ** 5, 1 << 16, 1024)

QUICK = Profile("quick", 20_000, 4000, 16, 5.0, 200, (0.75, 1.0), (0.1, 0.8), 24, 2000, 0.2, 100,
                2000, 20_000, 0.02, 20_000, 0.05, 0.1, (-30.0, 60.0), 10.0, (5.0, 10.0),
                600, 0.1, 3.0, 4000, 2048, 16)

PROFILES = {"full": FULL, "quick": QUICK}


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id:2d} {self.name}"

    def summary(self) -> dict:
        """Everything but the wall-clock time."""
        d = asdict(self)
        d.pop("seconds")
        return d


def _grid_sup(f, lo, hi, n=100_000):
    th = np.linspace(lo, hi, n)
    return float(np.max(f(th)))


def _domain_box(model, span=10.0):
    lo, hi = levy.theta_star(model)
    eps = 1e-9
    return max(lo + eps, -span), min(hi - eps, span)


# ---------------------------------------------------------------------------
# the criteria
# ---------------------------------------------------------------------------

def check_legendre(profile: Profile, seed: int, threads: int) -> CheckResult:
    bm = levy.brownian()
    cs = (0.1, 0.5, 1.0, 2.0, 5.0)
    bm_err = max(abs(float(levy.legendre(bm, c)) - c * c / 2) for c in cs)
    jump_err = 0.0
    rows = []
    for name, m in (("kou", kou_model()), ("gaussian", gaussian_jump_model()),
                    ("discrete", discrete_jump_model())):
        lo, hi = _domain_box(m)
        for a in (0.25, 0.5, 1.0):
            g = _grid_sup(lambda t: a * t - levy.psi(m, t), lo, hi)
            gd = _grid_sup(lambda t: a * t - levy.psi(m, -t), -hi, -lo)
            e1 = abs(float(levy.legendre(m, a)) - g)
            e2 = abs(float(levy.legendre_dual(m, a)) - gd)
            jump_err = max(jump_err, e1, e2)
            rows.append((name, a, e1, e2))
    ok = bm_err <= 1e-10 and jump_err <= 1e-6
    return CheckResult(1, "Legendre transform vs closed form and grid search", ok,
                       {"brownian_max_err": bm_err, "jump_max_err": jump_err, "rows": rows})


def check_girsanov(profile: Profile, seed: int, threads: int) -> CheckResult:
    m = kou_model()
    theta, c = 1.0, 0.5
    n = profile.girsanov_n
    tilted = levy.esscher_tilt(m, theta, c)
    y = increments(tilted.model, n, 1.0, stream(seed, "girsanov:tilted"))
    target = float(levy.psi_prime(m, theta)) - c
    mean_se = y.std(ddof=1) / math.sqrt(n)
    z_mean = abs(y.mean() - target) / mean_se
    w = np.exp(-theta * y + float(levy.psi(m, theta)) - c * theta)
    plain = increments(m.with_drift(m.b - c), n, 1.0, stream(seed, "girsanov:plain"))
    tests = {"cos": np.cos, "below0": lambda v: (v <= 0).astype(float), "arctan": np.arctan}
    zs = {}
    for k, f in tests.items():
        a, b = f(y) * w, f(plain)
        se = math.hypot(a.std(ddof=1), b.std(ddof=1)) / math.sqrt(n)
        zs[k] = abs(a.mean() - b.mean()) / se
    ok = z_mean <= 3 and max(zs.values()) <= 3
    return CheckResult(2, "Esscher tilt mean and likelihood-ratio reweighting", ok,
                       {"tilted_mean": float(y.mean()), "target": target, "z_mean": float(z_mean),
                        "z_tests": {k: float(v) for k, v in zs.items()}})


def check_many_to_one(profile: Profile, seed: int, threads: int) -> CheckResult:
    cfg = BranchingConfig(dt=0.01, seed=seed, threads=threads, block_runs=profile.run_block)
    out = {}
    for name, m in (("brownian", levy.brownian()), ("kou", kou_model())):
        res = many_to_one_check(m, 1.0, 0.5, (0.5, 2.0), 1.0, profile.m2o_n, profile.m2o_n, cfg, x0=1.0,
                                tag=f"m2o:{name}")
        out[name] = {"lhs": res.lhs, "rhs": res.rhs, "se": res.combined_se, "z": res.z}
    ok = all(v["z"] <= 3 for v in out.values())
    return CheckResult(3, "Many-to-one identity at t = 1", ok, out)


def check_max_speed(profile: Profile, seed: int, threads: int) -> CheckResult:
    cfg = BranchingConfig(dt=0.05, seed=seed, threads=threads, block_runs=profile.run_block)
    out = {}
    for name, m in (("brownian", levy.brownian()), ("kou", kou_model())):
        est = max_speed_estimate(m, 1.0, profile.speed_t, profile.speed_runs, cfg, keep=profile.speed_keep,
                                 tag=f"speed:{name}")
        out[name] = {"estimate": est.mean, "se": est.se, "target": est.target,
                     "deviation": abs(est.mean - est.target)}
    ok = all(v["deviation"] <= 0.15 for v in out.values())
    return CheckResult(4, "Maximum speed R_t / t against Gamma^-1(r)", ok, {"t": profile.speed_t, **out})


def check_phase(profile: Profile, seed: int, threads: int) -> CheckResult:
    m = levy.brownian()
    cfg = BranchingConfig(cap=profile.phase_cap, t_max=50.0, dt=profile.phase_dt, seed=seed,
                          threads=threads, block_runs=profile.run_block)
    cells, agree = [], True
    named = {}
    for c in profile.phase_c:
        g = float(levy.legendre(m, c))
        for r in profile.phase_r:
            scan = extinction_scan(m, c, r, PHASE_X0, profile.phase_runs, cfg)
            assessed = abs(r - g) > OFF_CRITICAL
            expected = "survives" if r > g else "extinct"
            good = (not assessed) or scan.classification == expected
            agree &= good
            cells.append({"c": c, "r": r, "gamma_c": g, "extinct": scan.extinct_frac,
                          "survived": scan.survived_frac, "undecided": scan.undecided_frac,
                          "class": scan.classification, "assessed": assessed, "agrees": good})
            named[(c, r)] = scan
    ok = agree
    extra = {}
    if (1.0, 0.3) in named:
        extra["extinct_frac_c1_r0.3"] = named[(1.0, 0.3)].extinct_frac
        ok &= named[(1.0, 0.3)].extinct_frac >= 0.99
    if (1.0, 0.8) in named:
        extra["survived_frac_c1_r0.8"] = named[(1.0, 0.8)].survived_frac
        ok &= named[(1.0, 0.8)].survived_frac >= 0.2
    return CheckResult(5, "Phase diagram of the killed branching process", ok,
                       {"x0": PHASE_X0, "cells": cells, **extra})


def check_existence(profile: Profile, seed: int, threads: int) -> CheckResult:
    out, ok = [], True
    cfg = PathConfig(dt=0.01, horizon=20.0, seed=seed, threads=threads, block_size=profile.path_block)
    for name, m in (("brownian", levy.brownian()), ("kou", kou_model())):
        for c in profile.phase_c:
            g = float(levy.legendre(m, c))
            for r in profile.phase_r:
                if levy.is_critical(m, c, r, g):
                    continue
                try:
                    qsd.qsd_density_formula(m, c, r, n_paths=profile.exist_ladder, cfg=cfg)
                    raised = False
                except NoRoot:
                    raised = True
                good = raised == (r > g)
                ok &= good
                out.append({"model": name, "c": c, "r": r, "gamma_c": g, "no_root": raised, "agrees": good})
    return CheckResult(6, "QSD construction fails exactly when r > Gamma(c)", ok, {"cells": out})


def check_qsd(profile: Profile, seed: int, threads: int) -> CheckResult:
    m = levy.brownian()
    c, r, t = 1.0, 0.5, 4.0
    lcfg = PathConfig(dt=1e-3, horizon=200.0, seed=seed, threads=threads, block_size=profile.path_block)
    nu = qsd.qsd_density_formula(m, c, r, n_paths=profile.ladder_n, cfg=lcfg)
    ks_cf = nu.ks(qsd.brownian_qsd_cdf(1.0, c, r))
    vcfg = PathConfig(dt=profile.qsd_dt, horizon=16.0, seed=seed, threads=threads, block_size=profile.path_block)
    rep = qsd.verify_qsd(m, c, r, nu, t, profile.qsd_n, vcfg)
    ok = ks_cf <= 0.05 and rep.survival_z <= 3 and rep.mean_tau_rel_error <= 0.05
    return CheckResult(7, "Constructed QSD: shape, survival and mean absorption time", ok,
                       {"ks_closed_form": ks_cf, "survival": rep.survival, "survival_se": rep.survival_se,
                        "survival_target": rep.survival_target, "survival_z": rep.survival_z,
                        "mean_tau": rep.mean_tau, "mean_tau_rel_error": rep.mean_tau_rel_error,
                        "ks_survivors": rep.ks})


def check_yaglom(profile: Profile, seed: int, threads: int) -> CheckResult:
    m = levy.brownian()
    cfg = PathConfig(dt=profile.yaglom_dt, seed=seed, threads=threads, block_size=profile.path_block)
    y = yaglom_mc(m, 1.0, 1.0, 15.0, profile.yaglom_n, cfg, tilt="auto")
    ks_min = y.distribution.ks(qsd.brownian_qsd_cdf(1.0, 1.0, 0.5))
    ks_sub = y.distribution.ks(qsd.brownian_qsd_cdf(1.0, 1.0, 0.375))
    ok = ks_min <= 0.05 and ks_sub >= 0.05
    return CheckResult(8, "Yaglom limit selects the minimal QSD", ok,
                       {"t": 15.0, "ks_minimal": ks_min, "ks_r0.375": ks_sub,
                        "n_effective": y.distribution.n_effective, "survival": y.survival})


def check_front(profile: Profile, seed: int, threads: int) -> CheckResult:
    lo, hi = profile.front_domain
    x = np.arange(lo, hi + profile.front_dx / 2, profile.front_dx)
    out, speeds = {}, []
    for name, m, rs in (("brownian", levy.brownian(), (0.5, 1.0, 2.0)), ("kou", kou_model(), (0.5, 1.0))):
        op = fkpp.discretize_adjoint(m, x)
        for r in rs:
            dt = 0.9 * op.stable_dt(r)
            st = fkpp.run_front(m, r, fkpp.step_profile(x), profile.front_T, dt, x, op=op)
            fit = fkpp.front_speed(st, window=profile.front_window)
            target = levy.gamma_inverse(m, r)
            out[f"{name}_r{r}"] = {"speed": fit.speed, "target": target,
                                  "rel_error": abs(fit.speed - target) / target, "r2": fit.r2}
            if name == "brownian":
                speeds.append(fit.speed)
    monotone = all(b > a for a, b in zip(speeds, speeds[1:]))
    ok = monotone and all(v["rel_error"] <= 0.08 for v in out.values())
    return CheckResult(9, "F-KPP front speed against Gamma^-1(r)", ok, {"monotone_in_r": monotone, **out})


def check_wave(profile: Profile, seed: int, threads: int) -> CheckResult:
    m = levy.brownian()
    c, r = SQRT2, 1.0
    levels = np.arange(0.0, profile.wave_top + profile.wave_dx / 2, profile.wave_dx)
    cfg = BranchingConfig(cap=10 ** 6, t_max=200.0, dt=0.2, seed=seed, threads=threads,
                          block_runs=profile.run_block)
    wave = fkpp.tw_from_gw(m, c, r, 0.5, levels, profile.wave_runs, cfg)
    control = fkpp.tw_from_gw(m, c, r, 0.5, levels, 2 * profile.wave_runs, cfg, tag="gw-control")
    _, ms = fkpp.wave_residual(m, c, r, wave)
    _, ms_ctl = fkpp.wave_residual(m, c, r, control)
    monotone = bool(np.all(np.diff(wave.w) >= 0))
    bounded = bool(np.all((wave.w > 0) & (wave.w <= 1)))
    mk = fkpp.mckean_fixed_point_check(m, c, r, wave, 0.5, profile.mckean_runs,
                                       replace(cfg, dt=0.05), probes=[1.0, 1.25, 1.5, 1.75, 2.0])
    ok = monotone and bounded and ms <= 3 * ms_ctl and mk.max_z <= 3
    return CheckResult(10, "Traveling wave from Galton-Watson counts", ok,
                       {"monotone": monotone, "bounded": bounded, "residual_ms": ms,
                        "control_residual_ms": ms_ctl, "mckean_max_z": mk.max_z,
                        "mckean_max_discrepancy": mk.max_discrepancy, "exit_fraction": mk.exit_fraction,
                        "undecided_runs": wave.n_undecided})


CHECKS = {1: check_legendre, 2: check_girsanov, 3: check_many_to_one, 4: check_max_speed, 5: check_phase,
          6: check_existence, 7: check_qsd, 8: check_yaglom, 9: check_front, 10: check_wave}


def run_check(i: int, profile: Profile, seed: int, threads: int = 1) -> CheckResult:
    t0 = time.perf_counter()
    res = CHECKS[i](profile, seed, threads)
    res.values = json.loads(json.dumps(res.values, default=_jsonable))
    res.passed = bool(res.passed)
    res.seconds = time.perf_counter() - t0
    return res


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def run_suite(profile: Profile, seed: int, threads: int = 1, only=None) -> list[CheckResult]:
    ids = sorted(CHECKS) if only is None else list(only)
    return [run_check(i, profile, seed, threads) for i in ids]


def summary_digest(results) -> str:
    return json.dumps([r.summary() for r in results], sort_keys=True, default=_jsonable)


def check_determinism(profile: Profile, seed: int, threads: int, thread_counts=(1, 8)) -> CheckResult:
    """Run the quick suite at each thread count (and once more at the first) and compare."""
    digests = [summary_digest(run_suite(QUICK, seed, n, only=range(1, 11))) for n in (thread_counts[0], *thread_counts)]
    same = all(d == digests[0] for d in digests)
    return CheckResult(11, "Identical summaries across repeats and thread counts", same,
                       {"thread_counts": list(thread_counts), "runs": len(digests)})


CHECKS[11] = check_determinism
