"""Time evolution by iterated resolvents.

evolve() runs the backward-Euler chain u_{k+1} = (I + lam A_eps)^{-1} u_k
and records the trajectory monitors (mass, extrema, norms, dissipation
energy, entropy when defined, per-step solver statistics).
exponential_formula() is the same chain evaluated at a final time, the
constructive limit object of the semigroup.  evolve_frozen_linear()
advances the linear nonautonomous equation whose coefficients are frozen
along a stored trajectory.  monitor_theorem21() compares two
trajectories against the quasi-contraction / L^inf growth / narrow
continuity bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import EntropyUnavailable, SolverError
from .fields import Field, Grid, require_same_grid
from .kernels import KernelSpec
from .nonlinearity import (NonlinearitySpec, b_eps, beta_eps,
                           beta_eps_prime, entropy, entropy_available,
                           phi_eps)
from .resolvent import (OperatorContext, ResolventConfig, damped_affine_solve,
                        resolvent_step)
from .spectral import (_ik_r, _irfft, _ksq_r, _rfft, h1_seminorm_sq,
                       hminus1_norm, l2_inner, lp_norm)

DEFAULT_MONITORS = frozenset({"mass", "positivity", "linf", "l2",
                              "h1_energy", "entropy", "energy_identity"})

_P_MASS_TOL = 1e-10
_P_NEG_TOL = 1e-12


@dataclass(frozen=True)
class EvolutionConfig:
    """Time grid and scheme for one evolution run.

    eps = None couples the regularization to the step as eps = sqrt(lam),
    so it vanishes with the time step in refinement studies.
    """

    T: float
    n_steps: int
    scheme: str = "implicit_euler"
    eps: float | None = None
    snapshot_every: int = 0  # 0 keeps only the endpoints
    monitors: frozenset = DEFAULT_MONITORS
    fp_tol: float = 1e-10
    max_iter: int = 500
    clip_negative: bool = False

    def __post_init__(self):
        if self.T <= 0 or self.n_steps < 1:
            raise ValueError("need T > 0 and n_steps >= 1")
        if self.scheme not in ("implicit_euler", "exponential_formula"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def lam(self) -> float:
        return self.T / self.n_steps

    @property
    def eps_effective(self) -> float:
        return self.eps if self.eps is not None else math.sqrt(self.lam)


@dataclass
class Trajectory:
    """Snapshots plus per-time monitor series of one evolution."""

    grid: Grid
    lam: float
    eps: float
    times: np.ndarray
    mass: np.ndarray
    min_u: np.ndarray
    max_u: np.ndarray
    l2: np.ndarray
    h1_energy: np.ndarray
    entropy: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    energy_defect: np.ndarray
    snapshot_times: list = dataclass_field(default_factory=list)
    snapshots: list = dataclass_field(default_factory=list)
    error: str | None = None

    def snapshot_at(self, t: float, tol: float = 1e-9) -> Field:
        for st, snap in zip(self.snapshot_times, self.snapshots):
            if abs(st - t) <= tol * max(1.0, abs(t)):
                return snap
        raise ValueError(f"no snapshot stored at t = {t}")

    @property
    def final(self) -> Field:
        return self.snapshots[-1]


def _require_probability(u0: Field) -> None:
    if u0.is_vector:
        raise ValueError("initial datum must be a scalar density")
    if float(u0.values.min()) < -_P_NEG_TOL:
        raise ValueError(
            f"initial datum leaves the probability simplex: "
            f"min = {u0.values.min():.3e} < -{_P_NEG_TOL}")
    mass = u0.mass()
    if abs(mass - 1.0) > _P_MASS_TOL:
        raise ValueError(
            f"initial datum must have unit mass, got {mass:.12f}")


def _energy_defect(ctx: OperatorContext, u_prev: Field, u_next: Field,
                   lam: float, spec: NonlinearitySpec, eps: float) -> float:
    """Discrete energy-identity defect of one backward-Euler step.

    defect = 1/2|u+|^2 - 1/2|u|^2 + lam*(grad beta_eps(u+), grad u+)
             - lam*(flux(u+), grad u+);  backward Euler makes it
    nonpositive up to the solve residual.
    """
    grid = ctx.grid
    up = u_next.values
    half_sq = 0.5 * (l2_inner(u_next, u_next) - l2_inner(u_prev, u_prev))
    uh = _rfft(grid, up)
    bh = _rfft(grid, beta_eps(up, spec, eps))
    w = ctx.hm1_w * (1.0 + ctx.ksq)  # plain Parseval weight
    diss = float(np.sum((bh * np.conj(uh)).real * ctx.ksq * w))
    work = 0.0
    flux = ctx.flux(up)
    if flux is not None:
        for a in range(grid.dim):
            grad_a = _irfft(grid, ctx.ik[a] * uh)
            work += float(np.sum(flux[..., a] * grad_a)) * grid.cell_volume
    return half_sq + lam * diss - lam * work


def evolve(u0: Field, cfg: EvolutionConfig, spec: NonlinearitySpec,
           kernel_spec: KernelSpec) -> Trajectory:
    """Backward-Euler evolution with monitors; partial trajectory on failure.

    Resolvent non-convergence does not raise: the trajectory returned so
    far carries the error message in .error (the CLI maps it to the
    solver exit code).
    """
    _require_probability(u0)
    grid = u0.grid
    lam = cfg.lam
    eps = cfg.eps_effective
    ctx = OperatorContext(grid, spec, kernel_spec, eps)
    rcfg = ResolventConfig(lam=lam, eps=eps, fp_tol=cfg.fp_tol,
                           max_iter=cfg.max_iter,
                           clip_negative=cfg.clip_negative)

    n = cfg.n_steps
    series = {name: np.full(n + 1, np.nan) for name in
              ("mass", "min_u", "max_u", "l2", "h1_energy", "entropy",
               "iterations", "residual", "energy_defect")}
    times = np.arange(n + 1) * lam
    want_entropy = "entropy" in cfg.monitors and \
        entropy_available(spec, kernel_spec) and \
        spec.drift_kind in ("zero", "grad_potential")
    want_energy = "energy_identity" in cfg.monitors

    want_h1 = "h1_energy" in cfg.monitors

    def record(k: int, u: Field, iters=np.nan, resid=np.nan, defect=np.nan):
        series["mass"][k] = u.mass()
        series["min_u"][k] = float(u.values.min())
        series["max_u"][k] = float(u.values.max())
        series["l2"][k] = lp_norm(u, 2)
        if want_h1:
            series["h1_energy"][k] = h1_seminorm_sq(
                Field(grid, beta_eps(u.values, spec, eps)))
        if want_entropy:
            try:
                series["entropy"][k] = entropy(u, spec, kernel_spec)
            except EntropyUnavailable:
                pass
        series["iterations"][k] = iters
        series["residual"][k] = resid
        series["energy_defect"][k] = defect

    traj = Trajectory(grid=grid, lam=lam, eps=eps, times=times,
                      mass=series["mass"], min_u=series["min_u"],
                      max_u=series["max_u"], l2=series["l2"],
                      h1_energy=series["h1_energy"],
                      entropy=series["entropy"],
                      iterations=series["iterations"],
                      residual=series["residual"],
                      energy_defect=series["energy_defect"])

    u = u0
    record(0, u)
    traj.snapshot_times.append(0.0)
    traj.snapshots.append(u)
    cadence = cfg.snapshot_every if cfg.snapshot_every > 0 else n
    for k in range(1, n + 1):
        try:
            result = resolvent_step(u, rcfg, spec, kernel_spec, ctx=ctx)
        except SolverError as exc:
            traj.error = str(exc)
            traj.times = times[:k]
            for key, arr in series.items():
                setattr(traj, key, arr[:k])
            return traj
        u_next = result.u
        defect = _energy_defect(ctx, u, u_next, lam, spec, eps) \
            if want_energy else np.nan
        u = u_next
        record(k, u, result.iterations, result.residual, defect)
        if k % cadence == 0 or k == n:
            traj.snapshot_times.append(float(times[k]))
            traj.snapshots.append(u)
    return traj


def exponential_formula(u0: Field, t: float, n: int, spec: NonlinearitySpec,
                        kernel_spec: KernelSpec,
                        eps: float | None = None,
                        fp_tol: float = 1e-10) -> Field:
    """(I + (t/n) A_eps)^{-n} u0: the semigroup approximant at time t.

    Shares the evolve() path by construction, so the two agree exactly
    for matching parameters.
    """
    cfg = EvolutionConfig(T=t, n_steps=n, eps=eps, fp_tol=fp_tol,
                          monitors=frozenset({"mass"}))
    traj = evolve(u0, cfg, spec, kernel_spec)
    if traj.error is not None:
        raise SolverError(traj.error)
    return traj.final


def evolve_frozen_linear(v0: Field, frozen: Trajectory, cfg: EvolutionConfig,
                         spec: NonlinearitySpec,
                         kernel_spec: KernelSpec) -> Trajectory:
    """Backward Euler for the linear equation with coefficients frozen at u.

        dv/dt - Lap(a(t,x) v) + div(F(t,x) v) = 0,
        a = beta_eps(u)/u  (beta_eps'(0) where u vanishes),
        F = D b_eps(u) + (K_eps * phi_eps(u)) phi_eps(u)/u.

    The regularized coefficient maps match the nonlinear path, so a
    trajectory solves its own frozen equation to solver tolerance.  The
    frozen trajectory must carry snapshots at every step time of cfg.
    """
    _require_same_time_grid(frozen, cfg)
    grid = require_same_grid(v0, frozen.snapshots[0])
    lam = cfg.lam
    eps = cfg.eps if cfg.eps is not None else frozen.eps
    ctx = OperatorContext(grid, spec, kernel_spec, eps)
    ik = _ik_r(grid)
    ksq = _ksq_r(grid)

    ratio_lo = eps + spec.alpha_floor / (1.0 + eps * spec.alpha_floor)

    n = cfg.n_steps
    times = np.arange(n + 1) * lam
    series = {name: np.full(n + 1, np.nan) for name in
              ("mass", "min_u", "max_u", "l2", "iterations", "residual")}
    traj = Trajectory(grid=grid, lam=lam, eps=eps, times=times,
                      mass=series["mass"], min_u=series["min_u"],
                      max_u=series["max_u"], l2=series["l2"],
                      h1_energy=np.full(n + 1, np.nan),
                      entropy=np.full(n + 1, np.nan),
                      iterations=series["iterations"],
                      residual=series["residual"],
                      energy_defect=np.full(n + 1, np.nan))

    def record(k, v: Field, iters=np.nan, resid=np.nan):
        series["mass"][k] = v.mass()
        series["min_u"][k] = float(v.values.min())
        series["max_u"][k] = float(v.values.max())
        series["l2"][k] = lp_norm(v, 2)
        series["iterations"][k] = iters
        series["residual"][k] = resid

    v = v0
    record(0, v)
    traj.snapshot_times.append(0.0)
    traj.snapshots.append(v)
    cadence = cfg.snapshot_every if cfg.snapshot_every > 0 else n
    for k in range(1, n + 1):
        u_k = frozen.snapshot_at(float(times[k])).values
        safe_u = np.where(u_k > 1e-12, u_k, 1.0)
        a_coef = np.where(u_k > 1e-12,
                          beta_eps(u_k, spec, eps) / safe_u,
                          beta_eps_prime(0.0, spec, eps))
        rmax = float(np.abs(u_k).max())
        ratio_hi = eps + spec.beta_prime_sup(rmax) \
            / (1.0 + eps * spec.beta_prime_sup(rmax))
        a_coef = np.clip(a_coef, ratio_lo, ratio_hi)

        f_coef = np.zeros(grid.shape + (grid.dim,))
        if ctx.has_drift:
            f_coef += ctx.drift_values * \
                b_eps(u_k, spec, eps)[..., None]
        if ctx.has_kernel:
            pu = phi_eps(u_k, eps)
            puh = _rfft(grid, pu)
            pratio = np.where(u_k > 1e-12, pu / safe_u, 1.0)
            for a in range(grid.dim):
                va = _irfft(grid, ctx.kernel_hat[a] * puh) * grid.cell_volume
                f_coef[..., a] += va * pratio

        def apply_linear(v_vals):
            out = ksq * _rfft(grid, a_coef * v_vals)
            for a in range(grid.dim):
                out = out + ik[a] * _rfft(grid, f_coef[..., a] * v_vals)
            return _irfft(grid, out)

        kappa = 0.5 * float(a_coef.min() + a_coef.max())
        try:
            v_vals, iters, resid = damped_affine_solve(
                apply_linear, v.values, lam, kappa, grid,
                cfg.fp_tol, cfg.max_iter)
        except SolverError as exc:
            traj.error = str(exc)
            traj.times = times[:k]
            return traj
        v = Field(grid, v_vals)
        record(k, v, iters, resid)
        if k % cadence == 0 or k == n:
            traj.snapshot_times.append(float(times[k]))
            traj.snapshots.append(v)
    return traj


def _require_same_time_grid(frozen: Trajectory, cfg: EvolutionConfig) -> None:
    lam = cfg.lam
    for k in range(1, cfg.n_steps + 1):
        t = k * lam
        try:
            frozen.snapshot_at(t)
        except ValueError as exc:
            raise ValueError(
                f"frozen trajectory lacks a snapshot at t = {t:.6g}; "
                f"run it with snapshot_every = 1 on a matching time grid"
            ) from exc


# ---------------------------------------------------------------------------
# Trajectory comparison: the quantitative side of the well-posedness
# statement (contraction rate, L^inf growth, narrow continuity proxy).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    times: np.ndarray
    distance: np.ndarray          # |u(t) - v(t)|_{-1}
    omega_hat: float              # fitted exponential rate of the distance
    envelope_gap: float           # max log-deviation above the fitted line
    degenerate: bool              # distances at roundoff, no rate fitted
    linf_ok: bool                 # max u(t) <= exp(gamma t) max u(0) + tol
    linf_margin: float
    narrow_constant: float        # Hoelder-1/2 proxy constant

    @property
    def contraction_nonincreasing(self) -> bool:
        return bool(np.all(np.diff(self.distance) <= 1e-12))


def _test_battery(grid: Grid) -> list[Field]:
    xs = grid.meshgrid()
    fields = [Field(grid, np.ones(grid.shape))]
    for a in range(grid.dim):
        arg = 2.0 * np.pi * xs[a] / grid.extent[a]
        fields.append(Field(grid, np.cos(arg)))
        fields.append(Field(grid, np.sin(arg)))
    diag = sum(2.0 * np.pi * xs[a] / grid.extent[a] for a in range(grid.dim))
    fields.append(Field(grid, np.cos(diag)))
    return fields


def monitor_theorem21(traj_u: Trajectory, traj_v: Trajectory,
                      gamma: float, linf_tol: float = 1e-6
                      ) -> ComparisonReport:
    """Compare two trajectories on one grid and time grid."""
    if traj_u.grid != traj_v.grid:
        raise ValueError("trajectories live on different grids")
    if len(traj_u.snapshot_times) != len(traj_v.snapshot_times) or \
            not np.allclose(traj_u.snapshot_times, traj_v.snapshot_times,
                            rtol=0, atol=1e-12):
        raise ValueError("trajectories have different snapshot times")
    times = np.asarray(traj_u.snapshot_times)
    dist = np.array([
        hminus1_norm(Field(traj_u.grid, su.values - sv.values))
        for su, sv in zip(traj_u.snapshots, traj_v.snapshots)])

    scale = max(lp_norm(traj_u.snapshots[0], 2), 1e-300)
    degenerate = bool(dist.max() <= 1e-12 * scale)
    if degenerate:
        omega_hat, gap = 0.0, 0.0
    else:
        good = dist > 1e-300
        logd = np.log(dist[good])
        t = times[good]
        A = np.vstack([np.ones_like(t), t]).T
        coef, *_ = np.linalg.lstsq(A, logd, rcond=None)
        omega_hat = float(coef[1])
        gap = float(np.max(logd - (coef[0] + coef[1] * t)))

    max0 = float(traj_u.snapshots[0].values.max())
    growth = np.array([math.exp(gamma * t) for t in times]) * max0
    maxima = np.array([float(s.values.max()) for s in traj_u.snapshots])
    linf_margin = float(np.max(maxima - growth))
    linf_ok = bool(linf_margin <= linf_tol)

    battery = _test_battery(traj_u.grid)
    c_narrow = 0.0
    for i in range(1, len(times)):
        dt = times[i] - times[i - 1]
        if dt <= 0:
            continue
        du = Field(traj_u.grid, traj_u.snapshots[i].values
                   - traj_u.snapshots[i - 1].values)
        for psi in battery:
            c_narrow = max(c_narrow, abs(l2_inner(du, psi)) / math.sqrt(dt))

    return ComparisonReport(times=times, distance=dist, omega_hat=omega_hat,
                            envelope_gap=gap, degenerate=degenerate,
                            linf_ok=linf_ok, linf_margin=linf_margin,
                            narrow_constant=c_narrow)
