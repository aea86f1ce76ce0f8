"""Legendre transforms of three models and the extinction/survival boundary.

The killed branching process started at x0 dies out when r < Gamma(c) and
survives with positive probability when r > Gamma(c). This script prints
Gamma on a few velocities and runs a small phase scan for Brownian motion.
"""
import math

import numpy as np

from kppqsd import levy
from kppqsd.branching import BranchingConfig, extinction_scan
from kppqsd.checks import discrete_jump_model, kou_model


def main():
    models = {"brownian": levy.brownian(), "kou": kou_model(), "discrete": discrete_jump_model()}
    cs = np.array([0.5, 1.0, 1.5, 2.0])
    print("Gamma(c)")
    print("model       " + "".join(f"c={c:<8g}" for c in cs))
    for name, m in models.items():
        print(f"{name:<12}" + "".join(f"{levy.legendre(m, c):<10.4f}" for c in cs))

    print("\nminimal front speed Gamma^-1(r)")
    for name, m in models.items():
        print(f"{name:<12}" + "".join(f"{levy.gamma_inverse(m, r):<10.4f}" for r in (0.5, 1.0, 2.0)))
    print(f"(brownian closed form sqrt(2r): {[round(math.sqrt(2 * r), 4) for r in (0.5, 1.0, 2.0)]})")

    print("\nphase scan, brownian, c = 1 (Gamma = 0.5), x0 = 5, 100 runs per cell")
    cfg = BranchingConfig(cap=20_000, t_max=50.0, dt=0.2, seed=1)
    for r in (0.2, 0.4, 0.6, 0.9):
        s = extinction_scan(levy.brownian(), 1.0, r, 5.0, 100, cfg)
        print(f"r={r:<4g} extinct={s.extinct_frac:.2f} alive at the end={s.alive_frac:.2f} -> {s.classification}")


if __name__ == "__main__":
    main()
