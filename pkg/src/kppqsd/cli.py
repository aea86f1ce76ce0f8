"""Command line: ``kppqsd {gamma,phase,qsd,yaglom,front,tw,check} --seed N [...]``.

Exit codes: 0 success (including a correct "no QSD exists" verdict),
1 a checked criterion failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks, fkpp, io, levy, qsd
from .branching import BranchingConfig, extinction_scan
from .errors import DomainError, KPPQSDError, NoRoot, RangeError
from .paths import PathConfig

log = logging.getLogger("kppqsd")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", type=Path, help="model JSON (default: standard Brownian motion)")
    common.add_argument("--seed", type=int, required=True, help="random seed (mandatory)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p = argparse.ArgumentParser(prog="kppqsd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gamma", parents=[common], help="Legendre transforms and their inverse")
    g.add_argument("--alpha", type=_floats, default=[0.0, 0.5, 1.0, 2.0])
    g.add_argument("--r", type=_floats, default=[0.5, 1.0])

    ph = sub.add_parser("phase", parents=[common], help="extinction / survival over an (r, c) grid")
    ph.add_argument("--c", type=_floats, default=list(checks.PHASE_C))
    ph.add_argument("--r", type=_floats, default=list(checks.PHASE_R))
    ph.add_argument("--x0", type=float, default=checks.PHASE_X0)
    ph.add_argument("--runs", type=int, default=200)
    ph.add_argument("--cap", type=int, default=50_000)
    ph.add_argument("--t-max", type=float, default=50.0)
    ph.add_argument("--dt", type=float, default=0.2)

    q = sub.add_parser("qsd", parents=[common], help="construct and verify a quasi-stationary law")
    q.add_argument("--c", type=float, required=True)
    q.add_argument("--r", type=float, required=True)
    q.add_argument("--points", type=int, default=qsd.DEFAULT_POINTS)
    q.add_argument("--ladder-paths", type=int, default=20_000)
    q.add_argument("--verify-paths", type=int, default=100_000, help="0 skips the simulation check")
    q.add_argument("--t", type=float, default=4.0)
    q.add_argument("--dt", type=float, default=0.01)

    y = sub.add_parser("yaglom", parents=[common], help="conditioned laws from a point")
    y.add_argument("--c", type=float, required=True)
    y.add_argument("--x0", type=float, default=1.0)
    y.add_argument("--t", type=_floats, default=[5.0, 10.0, 15.0], help="increasing schedule")
    y.add_argument("--paths", type=int, default=100_000)
    y.add_argument("--dt", type=float, default=0.01)

    f = sub.add_parser("front", parents=[common], help="F-KPP front from step initial data")
    f.add_argument("--r", type=float, required=True)
    f.add_argument("--T", type=float, default=40.0)
    f.add_argument("--dx", type=float, default=0.05)
    f.add_argument("--domain", type=_floats, default=[-100.0, 300.0])
    f.add_argument("--dt", type=float, default=None, help="default: 0.9 x stability bound")

    w = sub.add_parser("tw", parents=[common], help="traveling wave from Galton-Watson counts")
    w.add_argument("--c", type=float, required=True)
    w.add_argument("--r", type=float, required=True)
    w.add_argument("--s", type=float, default=0.5)
    w.add_argument("--top", type=float, default=4.5)
    w.add_argument("--dx", type=float, default=0.05)
    w.add_argument("--runs", type=int, default=20_000)
    w.add_argument("--mckean-runs", type=int, default=100_000)
    w.add_argument("--mckean-t", type=float, default=0.5)
    w.add_argument("--probes", type=_floats, default=[1.0, 1.25, 1.5, 1.75, 2.0])

    ch = sub.add_parser("check", parents=[common], help="run the acceptance suite")
    ch.add_argument("--quick", action="store_true", help="reduced budgets")
    ch.add_argument("--only", type=_floats, default=None, help="comma-separated check ids")
    return p


class Run:
    """Shared plumbing: model, metadata, guarded output paths."""

    def __init__(self, args):
        self.args = args
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        try:
            self.model = io.load_model(args.model) if args.model else levy.brownian()
        except FileNotFoundError:
            raise UsageError(f"model file not found: {args.model}")
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"invalid model file {args.model}: {exc}")
        config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                  if k not in ("force", "out", "threads")}
        config["model_doc"] = self.model.to_dict()
        self.meta = {"command": args.command, "seed": args.seed, "config": config,
                     "config_hash": io.config_hash(config)}
        self.out = args.out

    def path(self, name: str) -> Path:
        p = self.out / name
        if p.exists() and not self.args.force:
            raise UsageError(f"{p} exists; pass --force to overwrite")
        return p

    def claim(self, *names):
        """Fail before any work if an output would be overwritten."""
        return [self.path(n) for n in names]

    def table(self, name, columns, **extra):
        io.write_table(self.path(name), columns, {**self.meta, **extra})

    def summary(self, items: dict, **extra) -> int:
        ok = all(v["passed"] for v in items.values())
        doc = {**self.meta, "items": items, "passed": ok, **extra}
        io.write_json(self.path("summary.json"), doc)
        for k, v in items.items():
            print(f"[{'PASS' if v['passed'] else 'FAIL'}] {k}")
        return 0 if ok else 1


def _item(passed, **values):
    return {"passed": bool(passed), **values}


def cmd_gamma(run: Run) -> int:
    a = run.args
    run.claim("gamma.csv", "gamma_inverse.csv", "summary.json")
    m = run.model
    alpha = np.asarray(a.alpha)
    g = np.array([levy.legendre(m, x) for x in alpha], dtype=float)
    gd = np.array([levy.legendre_dual(m, x) for x in alpha], dtype=float)
    run.table("gamma.csv", {"alpha": alpha, "gamma": g, "gamma_dual": gd})
    inv = [levy.gamma_inverse(m, r) for r in a.r]
    run.table("gamma_inverse.csv", {"r": a.r, "c": inv})
    rt = max((abs(float(levy.legendre(m, c)) - r) for r, c in zip(a.r, inv)), default=0.0)
    items = {"gamma_nonnegative": _item(np.all(g >= -1e-14)),
             "inverse_round_trip": _item(rt <= 1e-8, max_error=rt)}
    if m.is_symmetric():
        items["symmetric_columns_equal"] = _item(np.max(np.abs(g - gd)) <= 1e-10)
    return run.summary(items)


def cmd_phase(run: Run) -> int:
    a = run.args
    run.claim("phase.csv", "summary.json")
    cfg = BranchingConfig(cap=a.cap, t_max=a.t_max, dt=a.dt, seed=a.seed, threads=a.threads)
    rows = {k: [] for k in ("r", "c", "n_runs", "extinct_frac", "survived_frac", "undecided_frac",
                            "gamma_of_c", "classification", "assessed", "agrees")}
    agree = True
    for c in a.c:
        for r in a.r:
            s = extinction_scan(run.model, c, r, a.x0, a.runs, cfg)
            assessed = abs(r - s.gamma_of_c) > checks.OFF_CRITICAL
            good = not assessed or s.classification == ("survives" if r > s.gamma_of_c else "extinct")
            agree &= good
            for k, v in (("r", r), ("c", c), ("n_runs", a.runs), ("extinct_frac", s.extinct_frac),
                         ("survived_frac", s.survived_frac), ("undecided_frac", s.undecided_frac),
                         ("gamma_of_c", s.gamma_of_c), ("classification", s.classification),
                         ("assessed", int(assessed)), ("agrees", int(good))):
                rows[k].append(v)
    boundary = {str(c): float(levy.legendre(run.model, c)) for c in a.c}
    run.table("phase.csv", rows, boundary=boundary)
    return run.summary({"off_critical_cells_agree": _item(agree)}, boundary=boundary)


def cmd_qsd(run: Run) -> int:
    a = run.args
    run.claim("qsd.csv", "qsd.json", "summary.json")
    m = run.model
    g = float(levy.legendre(m, a.c))
    try:
        theta = levy.qsd_theta(m, a.c, a.r)
    except NoRoot:
        msg = f"non-existence regime: r={a.r} > Gamma(c)={g}; no quasi-stationary law"
        print(msg)
        return run.summary({"existence_classification": _item(True, regime="non-existence", gamma_c=g)},
                           message=msg)
    lcfg = PathConfig(dt=1e-3, horizon=200.0, seed=a.seed, threads=a.threads)
    grid = qsd.default_grid(theta, a.c, a.points)
    nu = qsd.qsd_density_formula(m, a.c, a.r, grid, a.ladder_paths, lcfg)
    run.table("qsd.csv", {"x": nu.grid, "v": nu.values}, qsd=nu.metadata())
    io.write_json(run.path("qsd.json"), {**run.meta, **nu.metadata()})
    items = {"existence_classification": _item(True, regime="existence", gamma_c=g, theta=theta),
             "normalized": _item(abs(nu.integral() - 1) <= 1e-8)}
    if not m.jumps.active and m.b == 0:
        ks = nu.ks(qsd.brownian_qsd_cdf(m.sigma, a.c, a.r))
        items["closed_form_ks"] = _item(ks <= 0.05, ks=ks)
    if a.verify_paths > 0:
        vcfg = PathConfig(dt=a.dt, horizon=max(a.t, 8.0 / a.r), seed=a.seed, threads=a.threads)
        rep = qsd.verify_qsd(m, a.c, a.r, nu, a.t, a.verify_paths, vcfg)
        items["survival"] = _item(rep.survival_z <= 3, value=rep.survival, se=rep.survival_se,
                                  target=rep.survival_target)
        items["conditioned_ks"] = _item(rep.ks <= 0.05, ks=rep.ks)
        items["mean_absorption_time"] = _item(rep.mean_tau_rel_error <= 0.05, value=rep.mean_tau,
                                              target=rep.mean_tau_target)
    return run.summary(items)


def cmd_yaglom(run: Run) -> int:
    a = run.args
    names = [f"yaglom_t{t:g}.csv" for t in a.t]
    run.claim(*names, "summary.json")
    cfg = PathConfig(dt=a.dt, seed=a.seed, threads=a.threads)
    steps, trend = qsd.yaglom_convergence(run.model, a.c, a.x0, a.t, a.paths, cfg)
    xs = np.linspace(0, max(float(s.distribution.samples.max()) for s in steps), 501)
    for name, s in zip(names, steps):
        run.table(name, {"x": xs, "cdf": s.distribution.cdf(xs)}, t=s.t, survival=s.survival,
                  ks_to_final=s.ks_to_final, n_effective=s.distribution.n_effective)
    items = {"ks_trend_nonincreasing": _item(trend, ks=[s.ks_to_final for s in steps])}
    m = run.model
    if not m.jumps.active and m.b == 0:
        rmin = a.c ** 2 / (2 * m.sigma ** 2)
        ks = steps[-1].distribution.ks(qsd.brownian_qsd_cdf(m.sigma, a.c, rmin))
        items["matches_minimal_qsd"] = _item(ks <= 0.05, ks=ks, t=steps[-1].t)
    return run.summary(items)


def cmd_front(run: Run) -> int:
    a = run.args
    run.claim("front_trace.csv", "front_profile.csv", "summary.json")
    if len(a.domain) != 2 or a.domain[0] >= a.domain[1]:
        raise UsageError("--domain needs two increasing numbers LO,HI")
    x = np.arange(a.domain[0], a.domain[1] + a.dx / 2, a.dx)
    op = fkpp.discretize_adjoint(run.model, x)
    dt = a.dt if a.dt is not None else 0.9 * op.stable_dt(a.r)
    st = fkpp.run_front(run.model, a.r, fkpp.step_profile(x), a.T, dt, x, op=op)
    tr = st.trace_array()
    run.table("front_trace.csv", {"t": tr[:, 0], "front": tr[:, 1]}, dt=dt, dx=a.dx)
    run.table("front_profile.csv", {"x": x, "u": st.u}, t=st.time)
    fit = fkpp.front_speed(st)
    target = levy.gamma_inverse(run.model, a.r)
    rel = abs(fit.speed - target) / target
    return run.summary({"speed_vs_gamma_inverse": _item(rel <= 0.08, speed=fit.speed, target=target,
                                                        r2=fit.r2)}, max_clip=st.max_clip)


def cmd_tw(run: Run) -> int:
    a = run.args
    run.claim("wave.csv", "summary.json")
    levels = np.arange(0.0, a.top + a.dx / 2, a.dx)
    cfg = BranchingConfig(cap=10 ** 6, t_max=200.0, dt=0.2, seed=a.seed, threads=a.threads)
    wave = fkpp.tw_from_gw(run.model, a.c, a.r, a.s, levels, a.runs, cfg)
    run.table("wave.csv", {"x": wave.grid, "w": wave.w, "se": wave.se}, wave=wave.metadata())
    items = {"monotone": _item(np.all(np.diff(wave.w) >= 0)),
             "bounded": _item(np.all((wave.w > 0) & (wave.w <= 1)))}
    if a.mckean_runs > 0:
        mk = fkpp.mckean_fixed_point_check(run.model, a.c, a.r, wave, a.mckean_t, a.mckean_runs,
                                           BranchingConfig(dt=0.05, seed=a.seed, threads=a.threads),
                                           probes=a.probes)
        items["mckean_fixed_point"] = _item(mk.max_z <= 3, max_z=mk.max_z, exit_fraction=mk.exit_fraction)
    return run.summary(items, undecided_runs=wave.n_undecided)


def cmd_check(run: Run) -> int:
    a = run.args
    run.claim("check_summary.json")
    profile = checks.QUICK if a.quick else checks.FULL
    ids = sorted(checks.CHECKS) if a.only is None else [int(i) for i in a.only]
    bad = [i for i in ids if i not in checks.CHECKS]
    if bad:
        raise UsageError(f"unknown check ids {bad}; valid ids are 1-{max(checks.CHECKS)}")
    results = []
    for i in ids:
        res = checks.run_check(i, profile, a.seed, a.threads)
        print(res.line(), flush=True)
        results.append(res)
    ok = all(r.passed for r in results)
    io.write_json(run.out / "check_summary.json",
                  {**run.meta, "profile": profile.name, "passed": ok, "items": [r.summary() for r in results]})
    return 0 if ok else 1


COMMANDS = {"gamma": cmd_gamma, "phase": cmd_phase, "qsd": cmd_qsd, "yaglom": cmd_yaglom,
            "front": cmd_front, "tw": cmd_tw, "check": cmd_check}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](Run(args))
    except (UsageError, DomainError, RangeError) as exc:
        print(f"kppqsd: error: {exc}", file=sys.stderr)
        return 2
    except KPPQSDError as exc:
        print(f"kppqsd: failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"kppqsd: error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
