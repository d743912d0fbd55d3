"""MINI mixed finite elements for the stochastic Navier-Stokes equations with transport noise.

Modules: ``mesh`` (structured triangulations), ``spaces`` (MINI dofs and
quadrature), ``operators`` (assembly and saddle solves), ``noise`` (noise
families and Brownian paths), ``integrator`` (time stepping and energy
ledger), ``lab`` (dense spectral operator-norm measurements),
``experiments`` (Monte Carlo convergence studies) and ``cli``.
"""

__version__ = "0.1.0"

from .mesh import Mesh, build_structured_square, refine_uniform, unit_square_level
from .noise import BrownianDriver, NoiseModel, build_noise_family, sample_path
from .operators import OperatorSet, assemble, assemble_level, helmholtz_project
from .integrator import SimConfig, Trajectory, energy_report, simulate, step
from .experiments import ErrorReport, StudyConfig, run_convergence_study
from .rates import fit_eoc

__all__ = [
    "Mesh",
    "build_structured_square",
    "refine_uniform",
    "unit_square_level",
    "BrownianDriver",
    "NoiseModel",
    "build_noise_family",
    "sample_path",
    "OperatorSet",
    "assemble",
    "assemble_level",
    "helmholtz_project",
    "SimConfig",
    "Trajectory",
    "energy_report",
    "simulate",
    "step",
    "ErrorReport",
    "StudyConfig",
    "run_convergence_study",
    "fit_eoc",
]
