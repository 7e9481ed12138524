"""Scalar nonlinearities, their regularizations, entropy, and hypothesis checks.

Houses the diffusion nonlinearity beta, the drift amplitude b, the drift
field D, the cut-off eta, the regularized maps used by the implicit
step (beta_eps, phi_eps, b_eps, bstar_eps), the primitive integrals
j and j_eps, the free-energy functional for gradient-flow presets, and
the numerical validation of the structural hypotheses (i)-(v).

All scalar maps are pure, vectorized over numpy arrays, and reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigError, EntropyUnavailable
from .fields import Field, Grid, zeros
from .kernels import KernelSpec, gamma_estimate, interaction_potential, \
    sample_kernel
from .spectral import convolve_spectral, divergence, gradient, l2_inner, \
    lp_norm

BETA_KINDS = ("linear", "shifted_power", "custom")
B_KINDS = ("one", "logistic", "custom")
DRIFT_KINDS = ("zero", "grad_potential", "tabulated")
POTENTIAL_KINDS = ("cosine", "tabulated")

_ENTROPY_FLOOR = 1e-12  # cells below this skip the tau-integral term
_GL_NODES = 64


@dataclass(frozen=True)
class NonlinearitySpec:
    """beta / b / D presets plus the parameters that define them.

    beta presets:
        linear          beta(r) = slope * r
        shifted_power   beta(r) = alpha * r + c * sign(r) * |r|^m
        custom          user-supplied (beta, beta') callables
    b presets:
        one             b = 1
        logistic        b(r) = 1 / (1 + exp(r - r0))
        custom          user-supplied (b, b') callables
    drift presets:
        zero            D = 0
        grad_potential  D = -grad Phi, Phi a cosine well or tabulated field
        tabulated       D loaded from a vector snapshot
    """

    beta_kind: str = "linear"
    slope: float = 1.0
    alpha: float = 0.1
    m: float = 2.0
    c: float = 1.0
    beta_fn: Callable | None = None
    beta_prime_fn: Callable | None = None
    custom_alpha_floor: float = 0.0

    b_kind: str = "one"
    r0: float = 1.0
    b_fn: Callable | None = None
    b_prime_fn: Callable | None = None

    drift_kind: str = "zero"
    potential_kind: str = "cosine"
    potential_amplitude: float = 1.0
    potential_axis: int = 0
    potential_table: Field | None = field(default=None, repr=False)
    drift_table: Field | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.beta_kind not in BETA_KINDS:
            raise ConfigError(f"unknown beta preset {self.beta_kind!r}")
        if self.b_kind not in B_KINDS:
            raise ConfigError(f"unknown b preset {self.b_kind!r}")
        if self.drift_kind not in DRIFT_KINDS:
            raise ConfigError(f"unknown drift preset {self.drift_kind!r}")
        if self.beta_kind == "custom" and (
                self.beta_fn is None or self.beta_prime_fn is None):
            raise ConfigError("custom beta requires beta_fn and beta_prime_fn")
        if self.b_kind == "custom" and (
                self.b_fn is None or self.b_prime_fn is None):
            raise ConfigError("custom b requires b_fn and b_prime_fn")
        if self.beta_kind == "linear" and self.slope <= 0:
            raise ConfigError(f"linear beta requires slope > 0, got {self.slope}")
        if self.beta_kind == "shifted_power" and (self.m < 1 or self.c < 0):
            raise ConfigError("shifted_power beta requires m >= 1 and c >= 0")

    # -- beta ---------------------------------------------------------------

    def beta(self, r):
        r = np.asarray(r, dtype=np.float64)
        if self.beta_kind == "linear":
            return self.slope * r
        if self.beta_kind == "shifted_power":
            return self.alpha * r + self.c * np.sign(r) * np.abs(r) ** self.m
        return np.asarray(self.beta_fn(r), dtype=np.float64)

    def beta_prime(self, r):
        r = np.asarray(r, dtype=np.float64)
        if self.beta_kind == "linear":
            return np.full_like(r, self.slope)
        if self.beta_kind == "shifted_power":
            return self.alpha + self.c * self.m * np.abs(r) ** (self.m - 1.0)
        return np.asarray(self.beta_prime_fn(r), dtype=np.float64)

    @property
    def alpha_floor(self) -> float:
        """Lower bound of beta' claimed by the preset (hypothesis (i))."""
        if self.beta_kind == "linear":
            return self.slope
        if self.beta_kind == "shifted_power":
            return self.alpha
        return self.custom_alpha_floor

    def beta_prime_sup(self, rmax: float) -> float:
        """Upper bound of beta' over [-rmax, rmax] for the presets."""
        if self.beta_kind == "linear":
            return self.slope
        if self.beta_kind == "shifted_power":
            return float(self.alpha + self.c * self.m
                         * abs(rmax) ** (self.m - 1.0))
        lattice = np.linspace(-abs(rmax), abs(rmax), 513)
        return float(np.max(self.beta_prime(lattice)))

    # -- b ------------------------------------------------------------------

    def b(self, r):
        r = np.asarray(r, dtype=np.float64)
        if self.b_kind == "one":
            return np.ones_like(r)
        if self.b_kind == "logistic":
            return 1.0 / (1.0 + np.exp(np.clip(r - self.r0, -50.0, 50.0)))
        return np.asarray(self.b_fn(r), dtype=np.float64)

    def b_prime(self, r):
        r = np.asarray(r, dtype=np.float64)
        if self.b_kind == "one":
            return np.zeros_like(r)
        if self.b_kind == "logistic":
            e = np.exp(np.clip(r - self.r0, -50.0, 50.0))
            return -e / (1.0 + e) ** 2
        return np.asarray(self.b_prime_fn(r), dtype=np.float64)

    # -- D ------------------------------------------------------------------

    def drift_field(self, grid: Grid) -> Field:
        if self.drift_kind == "zero":
            return zeros(grid, vector=True)
        if self.drift_kind == "tabulated":
            if self.drift_table is None or self.drift_table.grid != grid:
                raise ConfigError("tabulated drift missing or on wrong grid")
            return self.drift_table
        phi = self.potential_field(grid)
        return Field(grid, -gradient(phi).values)

    def potential_field(self, grid: Grid) -> Field | None:
        """Phi with D = -grad Phi, or None when no potential is known."""
        if self.drift_kind == "zero":
            return zeros(grid)
        if self.drift_kind == "tabulated":
            return None
        if self.potential_kind == "tabulated":
            if self.potential_table is None or self.potential_table.grid != grid:
                raise ConfigError("tabulated potential missing or on wrong grid")
            return self.potential_table
        axis = self.potential_axis
        x = grid.meshgrid()[axis]
        vals = self.potential_amplitude * \
            np.cos(2.0 * np.pi * x / grid.extent[axis])
        return Field(grid, vals)


# ---------------------------------------------------------------------------
# Cut-off ramp.  C^1 Hermite ramp on [1, 2]; its maximum slope is 1.5,
# which exceeds the unit slope the analysis assumes but no computed
# quantity depends on the bound (see README).
# ---------------------------------------------------------------------------

def eta(r):
    r = np.asarray(r, dtype=np.float64)
    t = np.clip(r - 1.0, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


# ---------------------------------------------------------------------------
# Regularized maps.
# ---------------------------------------------------------------------------

def _resolvent_scalar(r, spec: NonlinearitySpec, eps: float) -> np.ndarray:
    """Solve y + eps*beta(y) = r elementwise (monotone, bracketed Newton)."""
    r = np.asarray(r, dtype=np.float64)
    lo = np.minimum(r, 0.0)
    hi = np.maximum(r, 0.0)
    y = r / (1.0 + eps * spec.beta_prime(r))
    tol = 1e-13 * (1.0 + np.abs(r))
    for _ in range(100):
        res = y + eps * spec.beta(y) - r
        if np.all(np.abs(res) <= tol):
            break
        lo = np.where(res < 0.0, y, lo)
        hi = np.where(res > 0.0, y, hi)
        step = res / (1.0 + eps * spec.beta_prime(y))
        cand = y - step
        outside = (cand < lo) | (cand > hi)
        y = np.where(outside, 0.5 * (lo + hi), cand)
    else:
        raise ArithmeticError("scalar resolvent did not converge; "
                              "is beta monotone?")
    return y


def beta_eps(r, spec: NonlinearitySpec, eps: float):
    """beta_eps(r) = eps*r + beta((1 + eps*beta)^{-1} r)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    y = _resolvent_scalar(r, spec, eps)
    return eps * np.asarray(r, dtype=np.float64) + spec.beta(y)


def beta_eps_prime(r, spec: NonlinearitySpec, eps: float):
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    y = _resolvent_scalar(r, spec, eps)
    bp = spec.beta_prime(y)
    return eps + bp / (1.0 + eps * bp)


def phi_eps(r, eps: float):
    """Symmetric truncation at level 1/eps (1-Lipschitz, odd, idempotent)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    level = 1.0 / eps
    return np.clip(np.asarray(r, dtype=np.float64), -level, level)


def b_eps(r, spec: NonlinearitySpec, eps: float):
    """b_eps(r) = (1 - eta(eps*r)) b(r); vanishes for r >= 2/eps."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    r = np.asarray(r, dtype=np.float64)
    return (1.0 - eta(eps * r)) * spec.b(r)


def bstar_eps(r, spec: NonlinearitySpec, eps: float):
    return b_eps(r, spec, eps) * np.asarray(r, dtype=np.float64)


def j_integral(r: float, spec: NonlinearitySpec) -> float:
    """Primitive j(r) = int_0^r beta(s) ds by adaptive quadrature."""
    if r == 0.0:
        return 0.0
    val, err = integrate.quad(lambda s: float(spec.beta(s)), 0.0, r,
                              epsrel=1e-10, epsabs=1e-14, limit=200)
    if not np.isfinite(val):
        raise ArithmeticError(f"quadrature of j failed at r={r}")
    return float(val)


def j_eps_integral(r: float, spec: NonlinearitySpec, eps: float) -> float:
    if r == 0.0:
        return 0.0
    val, err = integrate.quad(
        lambda s: float(beta_eps(s, spec, eps)), 0.0, r,
        epsrel=1e-10, epsabs=1e-14, limit=200)
    if not np.isfinite(val):
        raise ArithmeticError(f"quadrature of j_eps failed at r={r}")
    return float(val)


# ---------------------------------------------------------------------------
# Free energy for gradient-flow presets: D = -grad Phi and K = -grad W.
#
#   E(u) = int u(x) * int_1^{u(x)} beta'(tau)/(b(tau) tau) dtau dx
#        + int Phi u dx + 1/2 double-int W(x-y) u(x) u(y) dy dx
#
# The inner integral splits an exact logarithmic part from a smooth
# remainder so fixed-order quadrature stays accurate down to u ~ 0.
# ---------------------------------------------------------------------------

def _inner_energy_integrand(u_vals: np.ndarray,
                            spec: NonlinearitySpec) -> np.ndarray:
    ratio0 = float(spec.beta_prime(0.0) / spec.b(0.0))
    log_part = ratio0 * np.log(u_vals)

    nodes, weights = np.polynomial.legendre.leggauss(_GL_NODES)
    t = 0.5 * (nodes + 1.0)          # [0, 1]
    w = 0.5 * weights
    span = (u_vals - 1.0)[..., None]
    tau = 1.0 + span * t
    g = spec.beta_prime(tau) / spec.b(tau)
    smooth = np.where(tau != 0.0, (g - ratio0) / np.where(tau == 0, 1, tau), 0.0)
    remainder = np.sum(smooth * w, axis=-1) * span[..., 0]
    return log_part + remainder


def entropy(u: Field, spec: NonlinearitySpec, kernel_spec: KernelSpec) -> float:
    """Free energy of a density for gradient-flow presets.

    Raises EntropyUnavailable when the drift has no potential or the
    kernel is not the negative gradient of a known potential.
    """
    grid = u.grid
    phi = spec.potential_field(grid)
    if phi is None:
        raise EntropyUnavailable(
            f"drift preset {spec.drift_kind!r} has no potential")
    w_pot = interaction_potential(kernel_spec, grid)
    if w_pot is None:
        raise EntropyUnavailable(
            f"kernel {kernel_spec.kind!r} is not a gradient of a known "
            f"potential")

    vals = u.values
    active = vals > _ENTROPY_FLOOR
    inner = np.zeros_like(vals)
    if active.any():
        inner[active] = vals[active] * \
            _inner_energy_integrand(vals[active], spec)
    internal = float(inner.sum() * grid.cell_volume)
    potential = l2_inner(phi, u)
    wu = convolve_spectral(w_pot, u)
    interaction = 0.5 * l2_inner(wu, u)
    return internal + potential + interaction


def interaction_energy(u: Field, kernel_spec: KernelSpec) -> float:
    """The pairwise term of the free energy alone (oracle target)."""
    w_pot = interaction_potential(kernel_spec, u.grid)
    if w_pot is None:
        raise EntropyUnavailable(
            f"kernel {kernel_spec.kind!r} is not a gradient of a known "
            f"potential")
    return 0.5 * l2_inner(convolve_spectral(w_pot, u), u)


def entropy_available(spec: NonlinearitySpec,
                      kernel_spec: KernelSpec) -> bool:
    return spec.drift_kind != "tabulated" and \
        kernel_spec.kind in ("none", "riesz", "bessel")


# ---------------------------------------------------------------------------
# Hypothesis validation.  Failures never abort a run; they are recorded
# in the run outputs and surfaced through the CLI exit code.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    measured: float
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[HypothesisCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        lines = ["hypothesis validation:"]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"  [{status}] {c.name}: measured {c.measured:.6g}"
                         f" ({c.detail})")
        lines.append(f"overall: {'ok' if self.ok else 'VIOLATIONS FLAGGED'}")
        return "\n".join(lines)


def _beta_lattice() -> np.ndarray:
    core = np.linspace(-100.0, 100.0, 2001)
    tails = np.concatenate([-np.logspace(2, 4, 41), np.logspace(2, 4, 41)])
    return np.concatenate([core, tails])


def validate_hypotheses(spec: NonlinearitySpec, kernel_spec: KernelSpec,
                        grid: Grid) -> ValidationReport:
    checks = []

    lattice = _beta_lattice()
    bp_min = float(np.min(spec.beta_prime(lattice)))
    beta0 = float(np.abs(spec.beta(0.0)))
    ok_i = bp_min > 0.0 and beta0 <= 1e-12
    checks.append(HypothesisCheck(
        "(i) beta in C1, beta(0)=0, beta' >= alpha > 0", ok_i, bp_min,
        f"min beta' on lattice; |beta(0)| = {beta0:.1e}"))

    d_field = spec.drift_field(grid)
    d_sup = lp_norm(d_field, np.inf)
    if d_sup == 0.0:
        checks.append(HypothesisCheck(
            "(ii) D bounded, square integrable, (div D)^- = 0", True, 0.0,
            "D = 0"))
    else:
        div_min = float(divergence(d_field).values.min())
        ok_ii = np.isfinite(d_sup) and div_min >= -1e-8
        checks.append(HypothesisCheck(
            "(ii) D bounded, square integrable, (div D)^- = 0", ok_ii,
            div_min, f"min div D; |D|_inf = {d_sup:.3g}"))

    b_min = float(np.min(spec.b(lattice)))
    checks.append(HypothesisCheck(
        "(iii) b in C1, b >= 0", b_min >= -1e-14, b_min,
        "min b on lattice"))

    if kernel_spec.kind == "none":
        checks.append(HypothesisCheck(
            "(iv) kernel integrability and (1.2) bounds", True, 0.0, "K = 0"))
        checks.append(HypothesisCheck(
            "(v) K bounded outside the unit ball", True, 0.0, "K = 0"))
        return ValidationReport(tuple(checks))

    est = gamma_estimate(kernel_spec, grid)
    l1_coarse = _l1_ball_norm(kernel_spec, grid)
    if kernel_spec.kind == "tabulated":
        l1_ok, l1_detail = True, f"L1(B1) = {l1_coarse:.3g} (single grid)"
    else:
        fine = Grid(grid.dim, 2 * grid.n, grid.extent)
        l1_fine = _l1_ball_norm(kernel_spec, fine)
        l1_ok = l1_fine <= 1.5 * l1_coarse + 1e-8
        l1_detail = f"L1(B1): {l1_coarse:.3g} -> {l1_fine:.3g} under refinement"
    ok_iv = (not est.diverged) and l1_ok
    gamma_str = "diverges" if est.diverged else f"{est.value:.3g}"
    checks.append(HypothesisCheck(
        "(iv) kernel integrability and (1.2) bounds", ok_iv,
        est.refined if np.isfinite(est.refined) else est.value,
        f"gamma estimate {gamma_str} (n: {est.value:.3g}, "
        f"2n: {est.refined:.3g}); {l1_detail}"))

    sup_out = _sup_outside_ball(kernel_spec, grid)
    checks.append(HypothesisCheck(
        "(v) K bounded outside the unit ball", np.isfinite(sup_out), sup_out,
        "sup |K| on B1 complement"))
    return ValidationReport(tuple(checks))


def _l1_ball_norm(kernel_spec: KernelSpec, grid: Grid) -> float:
    from .kernels import _radius
    k = sample_kernel(kernel_spec, grid)
    mag = np.sqrt(np.sum(k.values ** 2, axis=-1))
    mask = _radius(grid) <= 1.0
    return float(mag[mask].sum() * grid.cell_volume)


def _sup_outside_ball(kernel_spec: KernelSpec, grid: Grid) -> float:
    from .kernels import _radius
    k = sample_kernel(kernel_spec, grid)
    mag = np.sqrt(np.sum(k.values ** 2, axis=-1))
    mask = _radius(grid) > 1.0
    return float(mag[mask].max()) if mask.any() else 0.0
