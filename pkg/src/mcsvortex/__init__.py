"""Maxwell-Chern-Simons vortex numerics on flat tori.

Submodules
----------
radial
    Entire radial profiles and their decay rate ``beta(s)``.
green
    Doubly periodic Green function, its regular part and ``u0``.
spectral
    Collocation grid with FFT-based operators.
elliptic
    Newton-Krylov solvers for the Chern-Simons and coupled systems.
blowup
    Glued bubble ansatz, weighted norms, projected fixed point.
diagnostics
    Mass, deviation, classification, Pohozaev closure, gauge fields.
"""
from .blowup import (ApproxSolution, CorrectionPair, build_approx, fixed_point,
                     kernel_elements, polish, reassemble, reduced_gradient, residuals,
                     weighted_norms)
from .diagnostics import (AlternativeReport, balance_residual, classify, cs_deviation,
                          gradient_bound, local_mass, mass_total, pohozaev_residual,
                          reconstruct_gauge)
from .elliptic import (Background, McsState, SolverParams, continuation, cs_newton,
                       mcs_newton, topological_init)
from .errors import *  # noqa: F401,F403
from .green import (GreenTable, TorusLattice, VortexSet, critical_points, gamma_eval,
                    green_eval, u0_eval)
from .radial import (RadialProfile, ShootingConfig, beta_of_profile,
                     check_integral_identities, shoot, solve_for_beta)
from .spectral import Grid

__version__ = "0.1.0"
