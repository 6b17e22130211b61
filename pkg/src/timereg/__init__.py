"""Simulation and time-regularity diagnostics for stochastic evolution
equations with monotone drift (heat equation, p-Laplace systems)."""

from .field import (
    EdgeField,
    Grid1D,
    NodeField,
    SpectralBasis,
    divergence,
    dual_norm_estimate,
    dual_norm_exact,
    edge_inner,
    gradient,
    h_inner,
    laplacian_eigs,
    sqrt_minus_A,
    v_norm,
)
from .noise import NoiseSpec, WienerIncrements, assemble_noise_field, derive_seed, refine, sample_increments
from .operators import (
    DiffusionSpec,
    DriftSpec,
    HypothesisReport,
    LinearHeat,
    PLaplaceSpec,
    apply_A,
    apply_B,
    apply_G,
    check_f_equivalence,
    check_hypotheses,
    f_map,
    s_flux,
)
from .regularity import (
    diff_quotient,
    diff_quotient_curve,
    fit_exponent,
    ito_identity_check,
    mc_aggregate,
    sobolev_seminorm,
)
from .stepper import StepperConfig, Trajectory, energy_J, implicit_step, simulate_path, solve_implicit

__version__ = "0.1.0"
