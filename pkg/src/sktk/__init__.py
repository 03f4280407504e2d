"""Particle, mean-field and grid-refinement tools for detailed-balanced SKT cross-diffusion."""
from .grid import Grid, PiecewiseLinear, discrete_norm, interpolate, laplacian
from .master import DiscreteState, StepPolicy, Trajectory, dissipation, entropy, solve
from .meanfield import chaos_study, mf_rhs, mf_solve
from .model import MicroParams, ModelParams, macro_to_micro, micro_to_macro, validate
from .particles import LabeledStateSpace, ParticleConfig, build_generator, evolve_mu, ssa_run

__version__ = "0.1.0"

__all__ = [
    "DiscreteState",
    "Grid",
    "LabeledStateSpace",
    "MicroParams",
    "ModelParams",
    "ParticleConfig",
    "PiecewiseLinear",
    "StepPolicy",
    "Trajectory",
    "build_generator",
    "chaos_study",
    "discrete_norm",
    "dissipation",
    "entropy",
    "evolve_mu",
    "interpolate",
    "laplacian",
    "macro_to_micro",
    "mf_rhs",
    "mf_solve",
    "micro_to_macro",
    "solve",
    "ssa_run",
    "validate",
]
