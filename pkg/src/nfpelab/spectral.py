"""Spectral operators on the periodic torus.

Discrete Fourier transforms, differential and resolvent multipliers,
Lebesgue and negative-Sobolev norms, and periodic convolution.  The
transform convention is unnormalized forward / 1/n^d inverse; every
physically meaningful operation carries explicit quadrature weights so
results are resolution-consistent.

The public entry points accept and return Fields.  Hot paths (the
resolvent iteration, time stepping) use the private raw-array helpers,
which share per-grid multiplier caches.

Wavenumbers: mode m carries k = 2*pi*m/L per axis.  First-derivative
multipliers zero the Nyquist mode so odd operators map real fields to
real fields; outputs of inverse transforms are real up to roundoff,
which is asserted (1e-12 relative) and truncated.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import Field, Grid, require_same_grid

_IMAG_RESIDUE_TOL = 1e-12
_DIRECT_CONV_MAX_N = 32


# ---------------------------------------------------------------------------
# Per-grid multiplier caches.  Grid is a frozen dataclass, hence hashable.
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _wavenumbers_full(grid: Grid) -> tuple[np.ndarray, ...]:
    """1-d wavenumber arrays k_a = 2*pi*m/L_a in fft layout."""
    return tuple(
        2.0 * np.pi * np.fft.fftfreq(grid.n, d=1.0 / grid.n) / grid.extent[a]
        for a in range(grid.dim))


@lru_cache(maxsize=32)
def _wavenumbers_r(grid: Grid) -> tuple[np.ndarray, ...]:
    """As _wavenumbers_full but the last axis in rfft (half) layout."""
    ks = list(_wavenumbers_full(grid))
    ks[-1] = 2.0 * np.pi * np.fft.rfftfreq(grid.n, d=1.0 / grid.n) \
        / grid.extent[-1]
    return tuple(ks)


def _broadcast(axis_arrays: tuple[np.ndarray, ...], dim: int):
    out = []
    for a, arr in enumerate(axis_arrays):
        shape = [1] * dim
        shape[a] = arr.size
        out.append(arr.reshape(shape))
    return out


@lru_cache(maxsize=32)
def _ksq_r(grid: Grid) -> np.ndarray:
    ks = _broadcast(_wavenumbers_r(grid), grid.dim)
    out = sum(k * k for k in ks)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=32)
def _ksq_full(grid: Grid) -> np.ndarray:
    ks = _broadcast(_wavenumbers_full(grid), grid.dim)
    out = sum(k * k for k in ks)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=32)
def _ik_r(grid: Grid) -> tuple[np.ndarray, ...]:
    """First-derivative multipliers i*k_a in rfft layout, Nyquist zeroed."""
    nyq = grid.n // 2
    out = []
    for a in range(grid.dim):
        k = _wavenumbers_r(grid)[a].copy()
        if a < grid.dim - 1:
            k[nyq] = 0.0
        else:
            k[-1] = 0.0  # rfft last entry is the Nyquist mode
        shape = [1] * grid.dim
        shape[a] = k.size
        arr = 1j * k.reshape(shape)
        arr.setflags(write=False)
        out.append(arr)
    return tuple(out)


@lru_cache(maxsize=32)
def _rfft_dup(grid: Grid) -> np.ndarray:
    """Multiplicity of each rfft mode in the full spectrum (1 or 2)."""
    n = grid.n
    dup = np.full(n // 2 + 1, 2.0)
    dup[0] = 1.0
    dup[-1] = 1.0
    shape = [1] * grid.dim
    shape[-1] = dup.size
    out = dup.reshape(shape)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=32)
def _hminus1_weight_r(grid: Grid) -> np.ndarray:
    """Modewise weight so sum(|u_hat|^2 * w) equals the H^-1 norm squared."""
    norm = grid.cell_volume / grid.n ** grid.dim
    out = _rfft_dup(grid) / (1.0 + _ksq_r(grid)) * norm
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Raw transforms on value arrays (components, if any, on the last axis).
# ---------------------------------------------------------------------------

def _axes(grid: Grid) -> tuple[int, ...]:
    return tuple(range(grid.dim))


def _rfft(grid: Grid, values: np.ndarray) -> np.ndarray:
    return np.fft.rfftn(values, axes=_axes(grid))


def _irfft(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return np.fft.irfftn(coeffs, s=grid.shape, axes=_axes(grid))


def _mean(grid: Grid, values: np.ndarray) -> float:
    return float(values.mean())


# ---------------------------------------------------------------------------
# Full-spectrum DFT (public API; tests and oracles use this layout).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralField:
    """Full complex DFT coefficients of a Field (unnormalized forward)."""

    grid: Grid
    coeffs: np.ndarray

    @property
    def is_vector(self) -> bool:
        return self.coeffs.ndim == self.grid.dim + 1


def dft_forward(f: Field) -> SpectralField:
    if not np.all(np.isfinite(f.values)):
        raise ValueError("dft_forward: non-finite input values")
    return SpectralField(f.grid, np.fft.fftn(f.values, axes=_axes(f.grid)))


def dft_inverse(F: SpectralField) -> Field:
    vals = np.fft.ifftn(F.coeffs, axes=_axes(F.grid))
    return Field(F.grid, _require_real(vals))


def _require_real(vals: np.ndarray) -> np.ndarray:
    scale = np.abs(vals).max()
    resid = np.abs(vals.imag).max()
    if resid > _IMAG_RESIDUE_TOL * max(scale, 1.0):
        raise ValueError(
            f"imaginary residue {resid:.3e} exceeds {_IMAG_RESIDUE_TOL} "
            f"relative to field scale {scale:.3e}")
    return np.ascontiguousarray(vals.real)


# ---------------------------------------------------------------------------
# Differential operators.
# ---------------------------------------------------------------------------

def laplacian(f: Field) -> Field:
    grid = f.grid
    return Field(grid, _irfft(grid, -_ksq_r(grid) * _rfft(grid, f.values)))


def gradient(f: Field) -> Field:
    if f.is_vector:
        raise ValueError("gradient expects a scalar field")
    grid = f.grid
    fh = _rfft(grid, f.values)
    comps = [_irfft(grid, ik * fh) for ik in _ik_r(grid)]
    return Field(grid, np.stack(comps, axis=-1))


def divergence(v: Field) -> Field:
    if not v.is_vector:
        raise ValueError("divergence expects a vector field")
    grid = v.grid
    acc = None
    for a, ik in enumerate(_ik_r(grid)):
        term = ik * _rfft(grid, v.values[..., a])
        acc = term if acc is None else acc + term
    return Field(grid, _irfft(grid, acc))


def project_divergence_free(v: Field) -> Field:
    """Remove the gradient part of a vector field (Helmholtz projection).

    Uses the same Nyquist-zeroed derivative multipliers as divergence(),
    so the projected field has exactly zero spectral divergence in that
    convention.  The zero mode is untouched.
    """
    if not v.is_vector:
        raise ValueError("projection expects a vector field")
    grid = v.grid
    ks = [ik.imag for ik in _ik_r(grid)]
    hats = [_rfft(grid, v.values[..., a]) for a in range(grid.dim)]
    ksq = sum(k * k for k in ks)
    safe = np.where(ksq == 0.0, 1.0, ksq)
    kdot = sum(k * h for k, h in zip(ks, hats)) / safe
    comps = [_irfft(grid, h - k * kdot) for k, h in zip(ks, hats)]
    return Field(grid, np.stack(comps, axis=-1))


# ---------------------------------------------------------------------------
# Resolvent operators.
# ---------------------------------------------------------------------------

def inv_I_minus_laplacian(f: Field) -> Field:
    """Solve (I - Lap) g = f by the spectral multiplier 1/(1+|k|^2)."""
    if f.is_vector:
        raise ValueError("inv_I_minus_laplacian expects a scalar field")
    grid = f.grid
    return Field(grid,
                 _irfft(grid, _rfft(grid, f.values) / (1.0 + _ksq_r(grid))))


def resolvent_shifted(f: Field, eps: float) -> Field:
    """Apply (eps*I - Lap)^{-1} via the multiplier 1/(eps + |k|^2)."""
    if eps <= 0:
        raise ValueError(f"shift eps must be positive, got {eps}")
    if f.is_vector:
        raise ValueError("resolvent_shifted expects a scalar field")
    grid = f.grid
    return Field(grid,
                 _irfft(grid, _rfft(grid, f.values) / (eps + _ksq_r(grid))))


# ---------------------------------------------------------------------------
# Inner products and norms.
# ---------------------------------------------------------------------------

def l2_inner(u: Field, v: Field) -> float:
    grid = require_same_grid(u, v)
    return float(np.sum(u.values * v.values) * grid.cell_volume)


def hminus1_inner(u: Field, v: Field) -> float:
    """H^-1 inner product ((I - Lap)^{-1} u, v)_2, evaluated spectrally.

    Equals the quadrature of inv_I_minus_laplacian(u) * v exactly (same
    multiplier, Parseval).
    """
    grid = require_same_grid(u, v)
    if u.is_vector or v.is_vector:
        raise ValueError("hminus1_inner expects scalar fields")
    uh = _rfft(grid, u.values)
    vh = _rfft(grid, v.values)
    w = _hminus1_weight_r(grid)
    return float(np.sum((uh * np.conj(vh)).real * w))


def hminus1_norm(u: Field) -> float:
    return float(np.sqrt(max(hminus1_norm_sq(u), 0.0)))


def hminus1_norm_sq(u: Field) -> float:
    grid = u.grid
    uh = _rfft(grid, u.values)
    return float(np.sum((uh.real ** 2 + uh.imag ** 2)
                        * _hminus1_weight_r(grid)))


def lp_norm(u: Field, p) -> float:
    """L^p norm for p in {1, 2, inf}; quadrature-weighted for finite p."""
    vals = u.values
    if p == 1:
        return float(np.abs(vals).sum() * u.grid.cell_volume)
    if p == 2:
        return float(np.sqrt(np.sum(vals * vals) * u.grid.cell_volume))
    if p in (np.inf, float("inf"), "inf"):
        return float(np.abs(vals).max())
    raise ValueError(f"lp_norm supports p in {{1, 2, inf}}, got {p!r}")


def h1_seminorm_sq(u: Field) -> float:
    """Quadrature of |grad u|^2 (spectral gradient)."""
    grid = u.grid
    uh = _rfft(grid, u.values)
    w = _rfft_dup(grid) * grid.cell_volume / grid.n ** grid.dim
    total = 0.0
    for ik in _ik_r(grid):
        gh = ik * uh
        total += float(np.sum((gh.real ** 2 + gh.imag ** 2) * w))
    return total


# ---------------------------------------------------------------------------
# Convolution.  convolve_spectral is the production path; convolve_direct
# is its O(n^2d) oracle, guarded to small grids.
# ---------------------------------------------------------------------------

def convolve_spectral(k: Field, u: Field) -> Field:
    """Periodic convolution (k * u) with quadrature weight.

    Approximates int k(x - y) u(y) dy; componentwise when k is a vector
    field.  u must be scalar.
    """
    grid = require_same_grid(k, u)
    if u.is_vector:
        raise ValueError("convolve_spectral expects scalar u")
    uh = _rfft(grid, u.values)
    w = grid.cell_volume
    if k.is_vector:
        comps = [_irfft(grid, _rfft(grid, k.values[..., a]) * uh) * w
                 for a in range(grid.dim)]
        return Field(grid, np.stack(comps, axis=-1))
    return Field(grid, _irfft(grid, _rfft(grid, k.values) * uh) * w)


def convolve_direct(k: Field, u: Field) -> Field:
    """Direct periodic double-sum convolution (small grids only).

    Deterministic summation order; used as the independent oracle for
    convolve_spectral.
    """
    grid = require_same_grid(k, u)
    if grid.n > _DIRECT_CONV_MAX_N:
        raise ValueError(
            f"convolve_direct is guarded to n <= {_DIRECT_CONV_MAX_N}; "
            f"got n = {grid.n}")
    if u.is_vector:
        raise ValueError("convolve_direct expects scalar u")
    w = grid.cell_volume
    uv = u.values
    out = np.zeros_like(k.values)
    comp_axes = tuple(range(grid.dim))
    for idx in np.ndindex(grid.shape):
        uy = uv[idx]
        if uy == 0.0:
            continue
        out += uy * np.roll(k.values, shift=idx, axis=comp_axes)
    return Field(grid, out * w)
