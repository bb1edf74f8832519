"""Branching random walks with selection, their free boundary limit and traveling waves."""

__version__ = "0.1.0"

from .grid import GridFunction, exponential_density
from .kernels import (DisplacementKernel, Gaussian, Laplace, Tabulated, Uniform, cell_weights,
                      load_tabulated, parse_kernel)
from .speed import (BracketFailure, SpeedBelowCritical, SpeedReport, compute_lambda_star,
                    lambda_for_speed, parse_speed, rate_function)
from .particles import (GapSample, InitialCondition, ParticleConfiguration, empirical_tail,
                        estimate_speed, simulate, simulate_dyadic_shaved, stationary_gap_sample)
from .fbsolver import (FbSolution, InsufficientMass, MassEscape, boundary_speed, evolve_free,
                       shave, solve_fb, tail_of)
from .wave import (NoConvergence, TiltedKernel, TransientWarning, TravelingWave,
                   build_tilted_kernel, critical_wave, ladder_chain_mc, nonexistence_demo,
                   spitzer_iterate, tail_report)
from .config import ExperimentConfig
from .acceptance import CRITERIA, run_criterion, validate_acceptance
