"""Periodic square lattice with power-law couplings between every pair of sites.

Sites are indexed row-major, ``site = x * L + y``. Distances use the
minimum-image convention on the torus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class LatticeGeometry:
    L: int
    alpha: float = 3.0
    mu: float = 0.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"side length must be an integer >= 2, got {self.L}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")

    @property
    def n_sites(self) -> int:
        return self.L * self.L


def min_image_sq(L: int) -> np.ndarray:
    """Squared minimum-image distance for every displacement (dx, dy) in [0, L)^2."""
    d = np.arange(L)
    d = np.minimum(d, L - d)
    return d[:, None] ** 2 + d[None, :] ** 2


@dataclass(frozen=True, eq=False)
class CouplingKernel:
    """Translation-invariant coupling table ``J[dx, dy]`` with ``J[0, 0] = 0``."""

    geometry: LatticeGeometry
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.table.setflags(write=False)

    def __getitem__(self, displacement) -> float:
        dx, dy = displacement
        L = self.geometry.L
        return float(self.table[dx % L, dy % L])

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense N x N coupling matrix between sites (row-major site index)."""
        L = self.geometry.L
        x, y = np.divmod(np.arange(L * L), L)
        dx = (x[:, None] - x[None, :]) % L
        dy = (y[:, None] - y[None, :]) % L
        J = np.ascontiguousarray(self.table[dx, dy])
        J.setflags(write=False)
        return J

    @property
    def field_sum(self) -> float:
        """Sum of couplings seen by one site; the local field on a uniform +1 grid."""
        return float(self.table.sum())


def build_kernel(geom: LatticeGeometry) -> CouplingKernel:
    r2 = min_image_sq(geom.L).astype(np.float64)
    table = np.zeros_like(r2)
    nz = r2 > 0
    table[nz] = r2[nz] ** (-0.5 * geom.alpha)
    return CouplingKernel(geom, table)


def check_grid(grid: np.ndarray, geom: LatticeGeometry | None = None) -> np.ndarray:
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise ValueError(f"expected a square 2-d spin grid, got shape {grid.shape}")
    if geom is not None and grid.shape[0] != geom.L:
        raise ValueError(f"grid side {grid.shape[0]} does not match lattice side {geom.L}")
    if not np.all((grid == 1) | (grid == -1)):
        raise ValueError("spins must be exactly -1 or +1")
    return grid


def random_grid(L: int, rng: np.random.Generator) -> np.ndarray:
    return (2 * rng.integers(0, 2, size=(L, L)) - 1).astype(np.int8)


def local_field(grid: np.ndarray, site, kernel: CouplingKernel) -> float:
    """Coupling-weighted sum of all other spins, ``sum_{j != i} J_ij s_j``."""
    L = kernel.geometry.L
    x, y = site
    if not (0 <= x < L and 0 <= y < L):
        raise IndexError(f"site {site} outside {L}x{L} lattice")
    grid = check_grid(grid, kernel.geometry)
    # J depends on (i - j) mod L, so roll the table to centre it on the site.
    rolled = np.roll(np.roll(kernel.table, x, axis=0), y, axis=1)
    return float(np.sum(rolled * grid))


def all_local_fields(grids: np.ndarray, kernel: CouplingKernel) -> np.ndarray:
    """Local fields for one grid (L, L) or a batch (n, L, L); same shape out."""
    grids = np.asarray(grids)
    L = kernel.geometry.L
    flat = grids.reshape(-1, L * L).astype(np.float64)
    return (flat @ kernel.matrix).reshape(grids.shape)


def total_energy(grid: np.ndarray, kernel: CouplingKernel, geom: LatticeGeometry | None = None) -> float:
    geom = geom or kernel.geometry
    grid = check_grid(grid, geom)
    s = grid.astype(np.float64)
    fields = all_local_fields(s, kernel)
    # every unordered pair appears twice in sum_i s_i f_i
    return float(-0.5 * np.sum(s * fields) - geom.mu * np.sum(s))


def flip_delta(grid: np.ndarray, site, kernel: CouplingKernel) -> float:
    """Energy change from flipping one spin."""
    x, y = site
    return 2.0 * grid[x, y] * (local_field(grid, site, kernel) + kernel.geometry.mu)
