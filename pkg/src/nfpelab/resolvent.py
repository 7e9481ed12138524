"""The implicit step u + lam * A_eps(u) = f.

A_eps(u) = -Lap(beta_eps(u))
           + div( D * b_eps(u) * u + (K_eps * phi_eps(u)) * phi_eps(u) )

with all spatial operators spectral.  The step is solved by a damped,
linearly preconditioned fixed-point iteration

    u  <-  u - theta * (I - lam*kappa*Lap)^{-1} (u + lam*A_eps(u) - f)

with kappa the diffusion floor of the nonlinearity; theta halves when
the residual fails to decrease.  Convergence is declared on the
relative H^-1 residual, the ambient metric of the problem.  The zero
Fourier mode is untouched by every term of A_eps, so the mean of u
equals the mean of f structurally.

Positivity is never enforced, only measured (an explicit clip_negative
flag exists for long runs and logs what it removed).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SolverError
from .fields import Field, Grid
from .kernels import KernelSpec, solver_kernel
from .nonlinearity import NonlinearitySpec, b_eps, beta_eps, phi_eps
from .spectral import _hminus1_weight_r, _ik_r, _irfft, _ksq_r, _rfft

_THETA_FLOOR = 1e-12


@dataclass(frozen=True)
class ResolventConfig:
    lam: float
    eps: float
    fp_tol: float = 1e-10
    max_iter: int = 500
    damping: float = 1.0
    clip_negative: bool = False

    def __post_init__(self):
        if self.lam <= 0 or self.eps <= 0 or self.fp_tol <= 0:
            raise ValueError("lam, eps and fp_tol must be positive")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")


@dataclass(frozen=True)
class InvariantReport:
    mass_in: float
    mass_out: float
    min_u: float
    max_u: float
    mass_ok: bool | None = None
    positivity_ok: bool | None = None
    linf_bound: float = float("nan")
    linf_bound_ok: bool | None = None
    clipped_mass: float = 0.0

    @property
    def all_ok(self) -> bool:
        flags = [self.mass_ok, self.positivity_ok, self.linf_bound_ok]
        return all(f for f in flags if f is not None)


@dataclass(frozen=True)
class ResolventResult:
    u: Field
    iterations: int
    residual: float
    report: InvariantReport


class OperatorContext:
    """Per-(grid, spec, kernel, eps) workspace for repeated A_eps applies.

    Precomputes the transformed solver kernel and the drift samples; the
    time stepper builds one context per run instead of per step.
    """

    def __init__(self, grid: Grid, spec: NonlinearitySpec,
                 kernel_spec: KernelSpec, eps: float):
        self.grid = grid
        self.spec = spec
        self.kernel_spec = kernel_spec
        self.eps = eps
        self.ksq = _ksq_r(grid)
        self.ik = _ik_r(grid)
        self.hm1_w = _hminus1_weight_r(grid)
        self.cell_volume = grid.cell_volume

        k_field = solver_kernel(kernel_spec, eps, grid)
        self.has_kernel = bool(np.any(k_field.values))
        self.kernel_hat = tuple(
            _rfft(grid, k_field.values[..., a]) for a in range(grid.dim)
        ) if self.has_kernel else None

        d_field = spec.drift_field(grid)
        self.has_drift = bool(np.any(d_field.values))
        self.drift_values = d_field.values if self.has_drift else None

    def flux(self, u_vals: np.ndarray) -> np.ndarray | None:
        """Physical-space flux D*b_eps(u)*u + (K_eps*phi_eps(u))*phi_eps(u)."""
        if not (self.has_kernel or self.has_drift):
            return None
        grid = self.grid
        out = np.zeros(grid.shape + (grid.dim,))
        if self.has_drift:
            out += self.drift_values * \
                (b_eps(u_vals, self.spec, self.eps) * u_vals)[..., None]
        if self.has_kernel:
            pu = phi_eps(u_vals, self.eps)
            puh = _rfft(grid, pu)
            for a in range(grid.dim):
                va = _irfft(grid, self.kernel_hat[a] * puh) * self.cell_volume
                out[..., a] += va * pu
        return out

    def apply(self, u_vals: np.ndarray) -> np.ndarray:
        grid = self.grid
        bh = _rfft(grid, beta_eps(u_vals, self.spec, self.eps))
        acc = self.ksq * bh  # -Lap(beta_eps(u)) in spectral space
        flux = self.flux(u_vals)
        if flux is not None:
            for a in range(grid.dim):
                acc = acc + self.ik[a] * _rfft(grid, flux[..., a])
        return _irfft(grid, acc)

    def hm1_norm(self, vals: np.ndarray) -> float:
        vh = _rfft(self.grid, vals)
        return float(np.sqrt(np.sum(
            (vh.real ** 2 + vh.imag ** 2) * self.hm1_w)))


def apply_A_eps(u: Field, spec: NonlinearitySpec, kernel_spec: KernelSpec,
                eps: float) -> Field:
    """One application of the regularized operator (zero-mean output)."""
    if u.is_vector:
        raise ValueError("A_eps acts on scalar fields")
    ctx = OperatorContext(u.grid, spec, kernel_spec, eps)
    return Field(u.grid, ctx.apply(u.values))


def damped_affine_solve(apply_op: Callable[[np.ndarray], np.ndarray],
                        f_vals: np.ndarray, lam: float, kappa: float,
                        grid: Grid, fp_tol: float, max_iter: int,
                        theta0: float = 1.0) -> tuple[np.ndarray, int, float]:
    """Solve u + lam * op(u) = f by preconditioned damped fixed point.

    Returns (u, residual_evaluations, relative_residual).  Raises
    SolverError on stagnation (the operational signal that lam exceeds
    the quasi-contraction range) or on non-finite iterates.  Residual
    norms (relative H^-1) share their transform with the preconditioner.
    """
    ksq = _ksq_r(grid)
    precond = 1.0 / (1.0 + lam * kappa * ksq)
    w = _hminus1_weight_r(grid)

    def norm_of_hat(vh):
        return float(np.sqrt(np.sum((vh.real ** 2 + vh.imag ** 2) * w)))

    f_norm = max(norm_of_hat(_rfft(grid, f_vals)), 1e-300)
    u = f_vals.copy()
    rh = _rfft(grid, u + lam * apply_op(u) - f_vals)
    rn = norm_of_hat(rh)
    evals = 1
    theta = theta0
    while rn > fp_tol * f_norm:
        if evals >= max_iter:
            raise SolverError(
                f"implicit step stagnated at relative residual "
                f"{rn / f_norm:.3e} after {evals} evaluations "
                f"(step size lam = {lam} may exceed the resolvent range)",
                residual=rn / f_norm, iterations=evals)
        corr = _irfft(grid, precond * rh)
        while True:
            ut = u - theta * corr
            rth = _rfft(grid, ut + lam * apply_op(ut) - f_vals)
            rtn = norm_of_hat(rth)
            evals += 1
            if not np.isfinite(rtn):
                raise SolverError("implicit step produced non-finite values",
                                  residual=float("nan"), iterations=evals)
            if rtn <= rn or theta <= _THETA_FLOOR:
                break
            theta *= 0.5
            if evals >= max_iter:
                raise SolverError(
                    f"implicit step stagnated at relative residual "
                    f"{rn / f_norm:.3e} after {evals} evaluations",
                    residual=rn / f_norm, iterations=evals)
        if rtn > rn and theta <= _THETA_FLOOR:
            raise SolverError(
                f"damping underflow at relative residual {rn / f_norm:.3e}",
                residual=rn / f_norm, iterations=evals)
        u, rh, rn = ut, rth, rtn
        theta = min(1.0, 1.5 * theta)
    return u, evals, rn / f_norm


def resolvent_step(f: Field, cfg: ResolventConfig, spec: NonlinearitySpec,
                   kernel_spec: KernelSpec,
                   ctx: OperatorContext | None = None) -> ResolventResult:
    """Solve u + lam * A_eps(u) = f to the configured H^-1 tolerance."""
    if f.is_vector:
        raise ValueError("resolvent_step expects a scalar field")
    grid = f.grid
    if ctx is None:
        ctx = OperatorContext(grid, spec, kernel_spec, cfg.eps)
    kappa = max(spec.alpha_floor, 1e-8)
    u_vals, evals, rel = damped_affine_solve(
        ctx.apply, f.values, cfg.lam, kappa, grid,
        cfg.fp_tol, cfg.max_iter, theta0=cfg.damping)

    mass_in = float(f.values.sum() * grid.cell_volume)
    clipped = 0.0
    if cfg.clip_negative and u_vals.min() < 0.0:
        neg = np.minimum(u_vals, 0.0)
        clipped = float(-neg.sum() * grid.cell_volume)
        u_vals = np.maximum(u_vals, 0.0)
        mass_now = float(u_vals.sum() * grid.cell_volume)
        if mass_now > 0.0:
            u_vals = u_vals * (mass_in / mass_now)
    mass_out = float(u_vals.sum() * grid.cell_volume)
    report = InvariantReport(
        mass_in=mass_in, mass_out=mass_out,
        min_u=float(u_vals.min()), max_u=float(u_vals.max()),
        clipped_mass=clipped)
    return ResolventResult(Field(grid, u_vals), evals, rel, report)


def check_lemma31(result: ResolventResult, f: Field, cfg: ResolventConfig,
                  gamma: float, mass_tol: float = 1e-9,
                  pos_tol: float = 1e-8) -> InvariantReport:
    """Measure the resolvent invariants: mass, positivity, L^inf bound.

    The bound uses N = max(f) / (1 - lam*gamma), which requires
    lam * gamma < 1.
    """
    if not np.isfinite(gamma) or cfg.lam * gamma >= 1.0:
        raise ValueError(
            f"lemma check needs lam * gamma < 1; got lam = {cfg.lam}, "
            f"gamma = {gamma}")
    base = result.report
    n_bound = float(f.values.max()) / (1.0 - cfg.lam * gamma)
    return InvariantReport(
        mass_in=base.mass_in, mass_out=base.mass_out,
        min_u=base.min_u, max_u=base.max_u,
        mass_ok=abs(base.mass_out - base.mass_in) <= mass_tol,
        positivity_ok=base.min_u >= -pos_tol,
        linf_bound=n_bound,
        linf_bound_ok=base.max_u <= n_bound + pos_tol,
        clipped_mass=base.clipped_mass)
