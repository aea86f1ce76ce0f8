"""F-KPP fronts, the maximum of branching motion and traveling waves.

A step initial condition for u_t = L*u + r(u^2 - u) develops a front that
moves at Gamma^-1(r), with a logarithmic lag at finite times. The same law
governs the rightmost particle of branching motion. At the critical speed a
traveling wave is rebuilt from Galton-Watson counts of first crossings.
"""
import math

import numpy as np

from kppqsd import fkpp, levy
from kppqsd.branching import BranchingConfig, max_speed_estimate
from kppqsd.checks import kou_model


def main():
    x = np.arange(-40.0, 120.0, 0.05)
    for name, m in (("brownian", levy.brownian()), ("kou", kou_model())):
        op = fkpp.discretize_adjoint(m, x)
        st = fkpp.run_front(m, 1.0, fkpp.step_profile(x), 40.0, 0.9 * op.stable_dt(1.0), x, op=op)
        fit = fkpp.front_speed(st, window=(20, 40))
        est = max_speed_estimate(m, 1.0, 10.0, 500, BranchingConfig(dt=0.05, seed=5), keep=1000)
        print(f"{name:<9} front speed {fit.speed:.3f}   target {levy.gamma_inverse(m, 1.0):.3f}"
              f"   R_10/10 = {est.mean:.3f} +- {est.se:.3f}")

    c, r = math.sqrt(2), 1.0
    levels = np.arange(0.0, 3.01, 0.25)
    wave = fkpp.tw_from_gw(levy.brownian(), c, r, 0.5, levels, 4000,
                           BranchingConfig(cap=10 ** 6, t_max=200.0, dt=0.2, seed=6))
    print(f"\nwave at c = sqrt(2), r = 1 (level s = 1/2 at x = 0), {wave.n_undecided} undecided runs")
    for xv, wv, se in zip(wave.grid[::2], wave.w[::2], wave.se[::2]):
        print(f"x={xv:5.2f}  w={wv:.3f} +- {se:.3f}")


if __name__ == "__main__":
    main()
