"""Numerical laboratory for kinetic alignment models on the torus x circle."""

__version__ = "0.1.0"

from .grid import Field, GridSpec, ModelParams, lp_norm, mass, polarization
from .kernels import (
    DipolarNematic,
    KernelBounds,
    SeparableRadial,
    TabulatedLocal,
    eval_k,
    f0_field,
    f1_field,
    kernel_bounds,
    picard_window,
    radial_profile,
    reduce_kernel,
)
from .linear import DriftField, StepReport, solve_linear, step_diffusion, step_drift, step_transport
from .nonlinear import (
    NonlinearRunConfig,
    continuity_study,
    picard_window_solve,
    solve_nonlinear,
)
from .particles import (
    InteractionConfig,
    ParticleEnsemble,
    alignment_target,
    alignment_targets,
    empirical_density,
    meanfield_compare,
    sample_from_field,
    step_particles,
)
from .scaling import TestFunction, default_test_functions, order_study, rescale_solution, weak_remainder
from .sphere import TangentField, check_ibp, div_omega, grad_omega, laplace_omega, proj_perp

__all__ = [
    "Field",
    "GridSpec",
    "ModelParams",
    "lp_norm",
    "mass",
    "polarization",
    "DipolarNematic",
    "KernelBounds",
    "SeparableRadial",
    "TabulatedLocal",
    "eval_k",
    "f0_field",
    "f1_field",
    "kernel_bounds",
    "picard_window",
    "radial_profile",
    "reduce_kernel",
    "DriftField",
    "StepReport",
    "solve_linear",
    "step_diffusion",
    "step_drift",
    "step_transport",
    "NonlinearRunConfig",
    "continuity_study",
    "picard_window_solve",
    "solve_nonlinear",
    "InteractionConfig",
    "ParticleEnsemble",
    "alignment_target",
    "alignment_targets",
    "empirical_density",
    "meanfield_compare",
    "sample_from_field",
    "step_particles",
    "TestFunction",
    "default_test_functions",
    "order_study",
    "rescale_solution",
    "weak_remainder",
    "TangentField",
    "check_ibp",
    "div_omega",
    "grad_omega",
    "laplace_omega",
    "proj_perp",
]
