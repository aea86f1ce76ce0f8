"""Killed and branching Levy processes, quasi-stationary laws and F-KPP waves.

Submodules
----------
levy       Laplace exponent, Legendre transforms, tilting, reflection.
paths      killed paths, Yaglom conditioning, first passage, ladder renewal.
branching  branching Levy processes: speed, extinction, level counts.
qsd        quasi-stationary densities and their verification.
fkpp       F-KPP fronts and traveling waves.
checks     the acceptance suite; ``cli`` wraps everything as ``kppqsd``.
"""
from .errors import (AllAbsorbed, BlowupError, ConvergenceError, DomainError, InsufficientTrace,
                     KPPQSDError, NoRoot, RangeError, StabilityError, UndefinedInversion)
from .levy import (Discrete, DoubleExponential, Gaussian, JumpSpec, LevyTriplet, TiltedModel, brownian,
                   center, dual_reflect, dual_tilt, esscher_tilt, gamma_inverse, legendre, legendre_dual,
                   model_from_dict, psi, psi_prime, psi_second, qsd_theta, theta_star)
from .paths import (EmpiricalDistribution, KilledPathResult, PathConfig, first_passage_mc, ladder_renewal,
                    simulate_killed, simulate_path, yaglom_mc)
from .branching import (BranchingConfig, ExtinctionOutcome, ParticleSystem, extinction_scan, gw_counts,
                        many_to_one_check, max_speed_estimate, run_blp, run_blp_killed)
from .qsd import (QSDensity, qsd_closed_form_brownian, qsd_density_formula, verify_qsd,
                  yaglom_convergence)
from .fkpp import (FrontState, WaveProfile, discretize_adjoint, front_speed, mckean_fixed_point_check,
                   run_front, tw_from_gw)

__version__ = "0.1.0"
