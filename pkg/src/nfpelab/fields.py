"""Periodic torus grids and the grid functions that live on them.

A Grid is a uniform discretization of the torus [0, L1) x ... x [0, Ld)
with the same number of points n along every axis.  A Field couples a
Grid with a real value array: shape ``grid.shape`` for scalars and
``grid.shape + (dim,)`` for vector fields (components interleaved per
cell, which is also the on-disk layout).

Both types are immutable values; every operation in the package returns
fresh Fields, so instances are safe to share across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import MissingInputError

SNAPSHOT_MAGIC = b"NFPE"
SNAPSHOT_VERSION = 1


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on a d-dimensional torus.

    Attributes:
        dim: spatial dimension, 2 or 3.
        n: points per axis, a power of two >= 8.
        extent: torus side length per axis.
    """

    dim: int
    n: int
    extent: tuple[float, ...]

    def __init__(self, dim: int, n: int, extent):
        if dim not in (2, 3):
            raise ValueError(f"grid dim must be 2 or 3, got {dim}")
        if not _is_power_of_two(n) or n < 8:
            raise ValueError(f"grid n must be a power of two >= 8, got {n}")
        if np.isscalar(extent):
            ext = (float(extent),) * dim
        else:
            ext = tuple(float(e) for e in extent)
        if len(ext) != dim:
            raise ValueError(f"extent needs {dim} entries, got {len(ext)}")
        if any(e <= 0 or not np.isfinite(e) for e in ext):
            raise ValueError(f"extent must be positive and finite, got {ext}")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "extent", ext)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / self.n for e in self.extent)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def coords(self, axis: int) -> np.ndarray:
        """Cell coordinates along one axis, in [0, L)."""
        return np.arange(self.n) * self.spacing[axis]

    def symmetric_coords(self, axis: int) -> np.ndarray:
        """Cell coordinates mapped to the fundamental cell (-L/2, L/2]."""
        idx = np.arange(self.n)
        signed = np.where(idx <= self.n // 2, idx, idx - self.n)
        return signed * self.spacing[axis]

    def meshgrid(self, symmetric: bool = False) -> list[np.ndarray]:
        axes = [self.symmetric_coords(a) if symmetric else self.coords(a)
                for a in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))


@dataclass(frozen=True)
class Field:
    """Real scalar or vector grid function.

    ``values`` has shape ``grid.shape`` (scalar) or ``grid.shape + (dim,)``
    (vector).  All entries must be finite; the array is frozen on
    construction.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        shape = self.grid.shape
        if vals.shape != shape and vals.shape != shape + (self.grid.dim,):
            raise ValueError(
                f"field shape {vals.shape} does not match grid {shape} "
                f"(scalar) or {shape + (self.grid.dim,)} (vector)")
        if not np.all(np.isfinite(vals)):
            bad = int(np.count_nonzero(~np.isfinite(vals)))
            raise ValueError(f"field has {bad} non-finite entries")
        if vals is self.values:
            vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.grid.dim + 1

    @property
    def components(self) -> int:
        return self.grid.dim if self.is_vector else 1

    def component(self, c: int) -> np.ndarray:
        return self.values[..., c] if self.is_vector else self.values

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def mass(self) -> float:
        """Quadrature of a scalar field over the torus."""
        if self.is_vector:
            raise ValueError("mass is defined for scalar fields only")
        return float(self.values.sum() * self.grid.cell_volume)


def zeros(grid: Grid, vector: bool = False) -> Field:
    shape = grid.shape + (grid.dim,) if vector else grid.shape
    return Field(grid, np.zeros(shape))


def constant(grid: Grid, value: float) -> Field:
    return Field(grid, np.full(grid.shape, float(value)))


def require_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError(f"grid mismatch: {f.grid} vs {grid}")
    return grid


# ---------------------------------------------------------------------------
# Snapshot file format.
#
# Layout (normative): magic "NFPE", u8 version=1, u8 dim, u8 components,
# u32 n (little endian), f64 extent per axis, then little-endian f64
# values row-major (components fastest).
# ---------------------------------------------------------------------------

def write_snapshot(field: Field, path) -> None:
    grid = field.grid
    header = SNAPSHOT_MAGIC + struct.pack(
        "<BBBI", SNAPSHOT_VERSION, grid.dim, field.components, grid.n)
    header += struct.pack(f"<{grid.dim}d", *grid.extent)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_snapshot(path) -> Field:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise MissingInputError(f"snapshot file not found: {path}") from exc
    if raw[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}, expected NFPE")
    version, dim, components, n = struct.unpack_from("<BBBI", raw, 4)
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    off = 4 + 7
    extent = struct.unpack_from(f"<{dim}d", raw, off)
    off += 8 * dim
    grid = Grid(dim, n, extent)
    count = n ** dim * components
    vals = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    shape = grid.shape if components == 1 else grid.shape + (dim,)
    return Field(grid, vals.reshape(shape).astype(np.float64))


# ---------------------------------------------------------------------------
# Initial densities.  All generators return unit-mass scalar fields.
# ---------------------------------------------------------------------------

def _wrapped_gaussian_1d(x: np.ndarray, center: float, sigma: float,
                         extent: float, images: int = 4) -> np.ndarray:
    out = np.zeros_like(x)
    for j in range(-images, images + 1):
        out += np.exp(-((x - center + j * extent) ** 2) / (2.0 * sigma ** 2))
    return out


def gaussian_density(grid: Grid, sigma: float = 1.0,
                     center: tuple[float, ...] | None = None) -> Field:
    """Periodized isotropic Gaussian, normalized to unit mass.

    The default center is the middle of the fundamental cell so the bulk
    of the density sits far from the identification seam.
    """
    if center is None:
        center = tuple(e / 2.0 for e in grid.extent)
    vals = np.ones(grid.shape)
    for axis in range(grid.dim):
        line = _wrapped_gaussian_1d(grid.coords(axis), center[axis], sigma,
                                    grid.extent[axis])
        shape = [1] * grid.dim
        shape[axis] = grid.n
        vals = vals * line.reshape(shape)
    vals /= vals.sum() * grid.cell_volume
    return Field(grid, vals)


def gaussian_mixture_density(grid: Grid, seed: int, components: int = 4,
                             sigma_range: tuple[float, float] = (0.8, 1.6),
                             margin: float = 0.25) -> Field:
    """Random mixture of periodized Gaussians in the probability simplex.

    Component centers stay inside the central (1 - 2*margin) box so the
    mixture decays well before the torus seam.  Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    vals = np.zeros(grid.shape)
    for _ in range(components):
        weight = rng.uniform(0.4, 1.0)
        sigma = rng.uniform(*sigma_range)
        center = [rng.uniform(margin * e, (1 - margin) * e)
                  for e in grid.extent]
        bump = np.ones(grid.shape)
        for axis in range(grid.dim):
            line = _wrapped_gaussian_1d(grid.coords(axis), center[axis],
                                        sigma, grid.extent[axis])
            shape = [1] * grid.dim
            shape[axis] = grid.n
            bump = bump * line.reshape(shape)
        vals += weight * bump
    vals /= vals.sum() * grid.cell_volume
    return Field(grid, vals)


def uniform_density(grid: Grid) -> Field:
    return constant(grid, 1.0 / grid.volume)
