"""Finite-difference and Monte Carlo tools for planar magnetic Laplacians
with randomly placed Aharonov-Bohm flux points."""

__version__ = "0.1.0"

from .bounds import (
    Cutoff,
    TrialFunction,
    beta_n,
    estimate_s0,
    feynman_hellmann_check,
    lifshitz_schedule,
    norm_Psi_psi,
    norm_v_k,
    rayleigh_quotient_dirichlet,
    residual_norm,
    taylor_remainder_check,
)
from .eigensolve import SpectralResult, count_below, dense_spectrum, lowest_eigenpairs
from .gauge import GaugeField, gauge_shift, link_phase, log_Psi, plaquette_phase, psi
from .geometry import (
    AccumulatingLatticeModel,
    BoxGeometry,
    ConstantDisplacement,
    ConstantFlux,
    FluxConfiguration,
    FluxPoint,
    PerturbedLatticeModel,
    PoissonModel,
    PowerTailFlux,
    UniformDisplacement,
    UniformFlux,
    cell_flux,
    cell_fluxes,
    check_event_a,
    check_event_b,
    empirical_event_probability,
    event_level,
    sample_accumulating_lattice,
    sample_perturbed_lattice,
    sample_poisson,
)
from .hardy import build_potential, verify_diamagnetic, verify_hardy_bound
from .ids import IDSCurve, bracket, estimate_ids, lifshitz_fit, small_e1_probability
from .operators import Grid, LatticeOperator, MagneticLaplacian, assemble, assemble_comparison, assemble_free
from .quadrature import QuadratureScheme

__all__ = [
    "__version__",
    "AccumulatingLatticeModel",
    "BoxGeometry",
    "ConstantDisplacement",
    "ConstantFlux",
    "Cutoff",
    "FluxConfiguration",
    "FluxPoint",
    "GaugeField",
    "Grid",
    "IDSCurve",
    "LatticeOperator",
    "MagneticLaplacian",
    "PerturbedLatticeModel",
    "PoissonModel",
    "PowerTailFlux",
    "QuadratureScheme",
    "SpectralResult",
    "TrialFunction",
    "UniformDisplacement",
    "UniformFlux",
    "assemble",
    "assemble_comparison",
    "assemble_free",
    "beta_n",
    "bracket",
    "build_potential",
    "cell_flux",
    "cell_fluxes",
    "check_event_a",
    "check_event_b",
    "count_below",
    "dense_spectrum",
    "empirical_event_probability",
    "estimate_ids",
    "estimate_s0",
    "event_level",
    "feynman_hellmann_check",
    "gauge_shift",
    "lifshitz_fit",
    "lifshitz_schedule",
    "link_phase",
    "log_Psi",
    "lowest_eigenpairs",
    "norm_Psi_psi",
    "norm_v_k",
    "plaquette_phase",
    "psi",
    "rayleigh_quotient_dirichlet",
    "residual_norm",
    "sample_accumulating_lattice",
    "sample_perturbed_lattice",
    "sample_poisson",
    "small_e1_probability",
    "taylor_remainder_check",
    "verify_diamagnetic",
    "verify_hardy_bound",
]
