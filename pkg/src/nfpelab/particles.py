"""Interacting-particle view: Euler-Maruyama on the torus.

The stochastic flow dX = (D b(u) + K*u)(X) dt + sigma(u(X)) dW with
sigma = sqrt(2 beta(u)/u) is simulated with coefficients either frozen
along a stored PDE trajectory or closed self-consistently through a
kernel density estimate of the ensemble itself.

Randomness is counter-based: every draw comes from a Philox generator
keyed by (seed, stream block), one block for the initial sampling and
one per step, and each block is drawn as a full (N, dim) array in one
call.  Trajectories are therefore bit-reproducible per seed and
independent of any worker partitioning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import Field, Grid
from .kernels import KernelSpec, solver_kernel
from .semigroup import Trajectory
from .nonlinearity import NonlinearitySpec
from .spectral import _ksq_r, _irfft, _rfft, convolve_spectral, hminus1_norm

_SAMPLING_BLOCK = 0


def _generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, block]))


@dataclass(frozen=True)
class ParticleEnsemble:
    """Positions on the torus plus the RNG bookkeeping that produced them."""

    positions: np.ndarray  # (N, dim), wrapped into [0, L) per axis
    seed: int
    time: float = 0.0
    step: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValueError(f"positions must be (N, dim) with N >= 1, "
                             f"got {pos.shape}")
        if pos is self.positions:
            pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class FrozenCoupling:
    """Coefficients held along a stored PDE trajectory per interval."""
    trajectory: Trajectory


@dataclass(frozen=True)
class SelfConsistentCoupling:
    """Coefficients rebuilt each step from the ensemble's own KDE."""
    bandwidth: float

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


def sample_initial(u0: Field, count: int, seed: int) -> ParticleEnsemble:
    """Draw count iid positions from a grid density.

    Inverse CDF over the flattened cell masses plus a uniform jitter
    within each cell; bit-deterministic per seed.
    """
    if u0.is_vector:
        raise ValueError("sample_initial expects a scalar density")
    grid = u0.grid
    vals = u0.values
    if float(vals.min()) < -1e-8:
        raise ValueError(
            f"density has negative cells beyond tolerance: {vals.min():.3e}")
    probs = np.clip(vals, 0.0, None).ravel()
    total = probs.sum()
    if total <= 0:
        raise ValueError("density has no positive mass")
    cdf = np.cumsum(probs / total)
    cdf[-1] = 1.0
    gen = _generator(seed, _SAMPLING_BLOCK)
    draws = gen.random(count)
    jitter = gen.random((count, grid.dim))
    flat = np.searchsorted(cdf, draws, side="right")
    flat = np.minimum(flat, probs.size - 1)
    idx = np.unravel_index(flat, grid.shape)
    spacing = np.array(grid.spacing)
    pos = (np.stack(idx, axis=-1) + jitter) * spacing
    return ParticleEnsemble(pos, seed=seed)


def _interpolate(field: Field, positions: np.ndarray) -> np.ndarray:
    """Periodic multilinear interpolation of a grid field at positions."""
    grid = field.grid
    n = grid.n
    spacing = np.array(grid.spacing)
    frac = positions / spacing
    base = np.floor(frac).astype(np.int64)
    w_hi = frac - base
    base %= n
    vals = field.values
    vector = field.is_vector
    out_shape = (positions.shape[0], grid.dim) if vector \
        else (positions.shape[0],)
    out = np.zeros(out_shape)
    for corner in np.ndindex(*(2,) * grid.dim):
        idx = tuple((base[:, a] + corner[a]) % n for a in range(grid.dim))
        w = np.ones(positions.shape[0])
        for a in range(grid.dim):
            w = w * (w_hi[:, a] if corner[a] else 1.0 - w_hi[:, a])
        out += vals[idx] * (w[:, None] if vector else w)
    return out


def em_step(ens: ParticleEnsemble, dt: float, drift_field: Field,
            sigma_field: Field) -> ParticleEnsemble:
    """One Euler-Maruyama step with grid-interpolated coefficients."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    grid = drift_field.grid
    if sigma_field.grid != grid:
        raise ValueError("drift and sigma fields live on different grids")
    pos = ens.positions
    drift = _interpolate(drift_field, pos)
    sigma = _interpolate(sigma_field, pos)
    noise = _generator(ens.seed, ens.step + 1).standard_normal(pos.shape)
    new = pos + drift * dt + sigma[:, None] * math.sqrt(dt) * noise
    if not np.all(np.isfinite(new)):
        bad = int(np.argwhere(~np.isfinite(new).all(axis=1))[0][0])
        raise FloatingPointError(
            f"particle {bad} left the finite range at t = {ens.time}")
    extent = np.array(grid.extent)
    new %= extent
    return ParticleEnsemble(new, seed=ens.seed, time=ens.time + dt,
                            step=ens.step + 1)


@dataclass(frozen=True)
class CoefficientFields:
    drift: Field
    sigma: Field
    clamp_fraction: float  # share of cells where the sigma clamp engaged


def build_fields(u: Field, spec: NonlinearitySpec, kernel_spec: KernelSpec,
                 eps: float = 0.0) -> CoefficientFields:
    """Drift D b(u) + K*u and diffusion sqrt(2 beta(u)/u) on the grid.

    The ratio beta(u)/u takes its limit beta'(0) where u vanishes and is
    clamped into [alpha_floor, sup beta']; clamp activations are counted
    (they stay at zero for presets inside hypothesis (i)).
    """
    grid = u.grid
    uv = np.maximum(u.values, 0.0)
    kfield = solver_kernel(kernel_spec, eps if eps > 0 else kernel_spec.eps_cut,
                           grid) if kernel_spec.kind != "none" else None

    drift = np.zeros(grid.shape + (grid.dim,))
    dfield = spec.drift_field(grid)
    if np.any(dfield.values):
        drift += dfield.values * spec.b(uv)[..., None]
    if kfield is not None and np.any(kfield.values):
        drift += convolve_spectral(kfield, Field(grid, uv)).values

    lo = spec.alpha_floor
    hi = spec.beta_prime_sup(float(uv.max()))
    safe = np.where(uv > 1e-12, uv, 1.0)
    ratio = np.where(uv > 1e-12, spec.beta(uv) / safe,
                     float(spec.beta_prime(0.0)))
    clamped = np.clip(ratio, lo, hi)
    clamp_fraction = float(np.mean(~np.isclose(ratio, clamped,
                                               rtol=1e-12, atol=0.0)))
    sigma = np.sqrt(2.0 * clamped)
    return CoefficientFields(Field(grid, drift), Field(grid, sigma),
                             clamp_fraction)


def silverman_bandwidth(ens: ParticleEnsemble, grid: Grid) -> float:
    """max(2 * spacing, N^{-1/(d+4)} * circular std of the positions)."""
    extent = np.array(grid.extent)
    ang = 2.0 * np.pi * ens.positions / extent
    # circular std per axis, mapped back to length units
    c = np.cos(ang).mean(axis=0)
    s = np.sin(ang).mean(axis=0)
    rbar = np.clip(np.hypot(c, s), 1e-12, 1.0)
    circ_std = np.sqrt(-2.0 * np.log(rbar)) * extent / (2.0 * np.pi)
    sigma_data = float(np.mean(circ_std))
    rate = ens.count ** (-1.0 / (grid.dim + 4))
    return max(2.0 * max(grid.spacing), rate * sigma_data)


def kde_density(ens: ParticleEnsemble, grid: Grid,
                bandwidth: float) -> Field:
    """Periodic Gaussian KDE: cell histogram plus spectral smoothing.

    Result is renormalized to unit mass; the Gaussian multiplier keeps
    it nonnegative to roundoff.
    """
    if bandwidth < 2.0 * max(grid.spacing) * (1.0 - 1e-12):
        raise ValueError(
            f"bandwidth {bandwidth:.4g} is below two grid spacings "
            f"({2 * max(grid.spacing):.4g}); KDE bias would be unbounded")
    spacing = np.array(grid.spacing)
    idx = np.floor(ens.positions / spacing).astype(np.int64) % grid.n
    flat = np.ravel_multi_index(tuple(idx[:, a] for a in range(grid.dim)),
                                grid.shape)
    counts = np.bincount(flat, minlength=grid.n ** grid.dim).astype(float)
    density = counts.reshape(grid.shape) / (ens.count * grid.cell_volume)
    smooth_hat = _rfft(grid, density) * \
        np.exp(-0.5 * bandwidth ** 2 * _ksq_r(grid))
    vals = _irfft(grid, smooth_hat)
    vals /= vals.sum() * grid.cell_volume
    return Field(grid, vals)


@dataclass
class SimulationResult:
    times: list
    ensembles: list
    kdes: list
    hm1_distances: list          # vs the PDE law when available, else nan
    clamp_fraction: float
    bandwidth: float


def simulate(u0: Field, mode, count: int, dt: float, t_final: float,
             seed: int, spec: NonlinearitySpec, kernel_spec: KernelSpec,
             snapshot_every: int = 0, eps: float = 0.0,
             bandwidth: float | None = None) -> SimulationResult:
    """Run the particle system under frozen or self-consistent coupling.

    Frozen mode holds the PDE coefficients over each stored snapshot
    interval, which must align with dt; self-consistent mode rebuilds
    them from the ensemble KDE every step.
    """
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final = {t_final} is not a multiple of dt = {dt}")
    grid = u0.grid
    ens = sample_initial(u0, count, seed)

    frozen = isinstance(mode, FrozenCoupling)
    if frozen:
        traj = mode.trajectory
        if traj.grid != grid:
            raise ValueError("frozen trajectory grid does not match density")
        snap_times = np.asarray(traj.snapshot_times)
        if snap_times[-1] < t_final - 1e-9:
            raise ValueError("frozen trajectory ends before t_final")
        rel = snap_times / dt
        if not np.allclose(rel, np.round(rel), atol=1e-6):
            raise ValueError("frozen snapshot times are not aligned with dt")
        eps = eps if eps > 0 else traj.eps
    elif isinstance(mode, SelfConsistentCoupling):
        bandwidth = mode.bandwidth
    else:
        raise TypeError(f"unsupported coupling mode {mode!r}")

    if bandwidth is None:
        bandwidth = silverman_bandwidth(ens, grid)

    cadence = snapshot_every if snapshot_every > 0 else max(n_steps, 1)
    result = SimulationResult([], [], [], [], 0.0, bandwidth)
    clamp_accum = 0.0

    def record(ens: ParticleEnsemble):
        kde = kde_density(ens, grid, bandwidth)
        result.times.append(ens.time)
        result.ensembles.append(ens)
        result.kdes.append(kde)
        if frozen:
            try:
                ref = mode.trajectory.snapshot_at(ens.time)
                dist = hminus1_norm(Field(grid, kde.values - ref.values))
            except ValueError:
                dist = float("nan")
        else:
            dist = float("nan")
        result.hm1_distances.append(dist)

    record(ens)
    coeffs = None
    coeff_time = None
    for k in range(n_steps):
        t = k * dt
        if frozen:
            held = snap_times[np.searchsorted(snap_times, t + 1e-12) - 1] \
                if t > snap_times[0] else snap_times[0]
            if coeff_time is None or held != coeff_time:
                u_ref = mode.trajectory.snapshot_at(float(held))
                coeffs = build_fields(u_ref, spec, kernel_spec, eps=eps)
                coeff_time = held
        else:
            u_kde = kde_density(ens, grid, bandwidth)
            coeffs = build_fields(u_kde, spec, kernel_spec, eps=eps)
        clamp_accum = max(clamp_accum, coeffs.clamp_fraction)
        ens = em_step(ens, dt, coeffs.drift, coeffs.sigma)
        if (k + 1) % cadence == 0 or (k + 1) == n_steps:
            record(ens)
    result.clamp_fraction = clamp_accum
    return result
