"""nfpelab: a spectral laboratory for a nonlinear Fokker-Planck equation
with singular interaction kernels.

Core objects: periodic-torus Fields (fields), spectral operators
(spectral), interaction kernels (kernels), scalar nonlinearities and
their regularizations (nonlinearity), the implicit resolvent step
(resolvent), semigroup time evolution (semigroup), uniqueness-style gap
diagnostics (diagnostics), and the interacting-particle system
(particles).  The CLI lives in cli; run `nfpe --help`.
"""

from .fields import Field, Grid, gaussian_density, gaussian_mixture_density, \
    read_snapshot, uniform_density, write_snapshot
from .kernels import GammaEstimate, KernelSpec, gamma_constant, \
    gamma_estimate, regularize_kernel, sample_kernel, solver_kernel
from .nonlinearity import NonlinearitySpec, ValidationReport, b_eps, \
    beta_eps, bstar_eps, entropy, eta, j_eps_integral, j_integral, phi_eps, \
    validate_hypotheses
from .resolvent import InvariantReport, ResolventConfig, ResolventResult, \
    apply_A_eps, check_lemma31, resolvent_step
from .semigroup import ComparisonReport, EvolutionConfig, Trajectory, \
    evolve, evolve_frozen_linear, exponential_formula, monitor_theorem21
from .diagnostics import GronwallFit, UniquenessProbe, gronwall_check, \
    h_eps_series, h_eps_value
from .particles import CoefficientFields, FrozenCoupling, ParticleEnsemble, \
    SelfConsistentCoupling, build_fields, em_step, kde_density, \
    sample_initial, silverman_bandwidth, simulate

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
