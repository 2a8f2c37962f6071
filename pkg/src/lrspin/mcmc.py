"""Single-site Metropolis sampling of the long-range lattice.

The local field of every site is cached and updated incrementally after each
accepted flip, so a proposal costs O(1) and an accepted flip O(N).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import (
    CouplingKernel,
    LatticeGeometry,
    all_local_fields,
    random_grid,
)

REFRESH_EVERY = 1_000_000  # accepted flips between full field recomputations
_CHUNK = 1 << 20

# temperature grids used by the original experiments
SCALING_TEMPS = tuple(round(0.1 * k, 1) for k in range(141))
TRAINING_TEMPS = tuple(0.5 * k for k in range(29))


@dataclass(frozen=True)
class McmcConfig:
    temperature: float
    burn_in_steps: int | None = None  # default 500 * N proposals
    stride: int | None = None  # default N proposals (one sweep)
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0 or not math.isfinite(self.temperature):
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")
        if self.burn_in_steps is not None and self.burn_in_steps < 0:
            raise ValueError("burn_in_steps must be >= 0")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")

    def resolved(self, geom: LatticeGeometry) -> tuple[int, int]:
        n = geom.n_sites
        burn = 500 * n if self.burn_in_steps is None else self.burn_in_steps
        stride = n if self.stride is None else self.stride
        return burn, stride


@dataclass(eq=False)
class SampleSet:
    """Configurations ``grids[k]`` of shape (n, L, L), int8 in {-1, +1}."""

    grids: np.ndarray
    temperature: float
    geometry: LatticeGeometry
    seed: int = 0

    def __post_init__(self):
        g = np.asarray(self.grids)
        if g.ndim != 3 or g.shape[1:] != (self.geometry.L, self.geometry.L):
            raise ValueError(f"grids of shape {g.shape} do not match L={self.geometry.L}")
        self.grids = g.astype(np.int8, copy=False)

    def __len__(self):
        return self.grids.shape[0]

    def flat(self) -> np.ndarray:
        """Configurations as (n, N) float vectors, the visible-layer view."""
        return self.grids.reshape(len(self), -1).astype(np.float64)


def accept(delta_e: float, temperature: float, u: float) -> bool:
    """Metropolis rule; ``u`` is a uniform draw in [0, 1)."""
    if delta_e <= 0:
        return True
    if temperature == 0:
        return False
    return u < math.exp(-delta_e / temperature)


def mcmc_step(grid: np.ndarray, fields: np.ndarray, kernel: CouplingKernel,
              cfg: McmcConfig, rng: np.random.Generator) -> bool:
    """One proposal on ``grid`` with cached ``fields``; both updated in place on acceptance."""
    L = grid.shape[0]
    site = int(rng.integers(L * L))
    u = float(rng.random())
    flat_grid = grid.reshape(-1)
    flat_fields = fields.reshape(-1)
    s = flat_grid[site]
    delta_e = 2.0 * s * (flat_fields[site] + kernel.geometry.mu)
    if not accept(delta_e, cfg.temperature, u):
        return False
    flat_grid[site] = -s
    flat_fields -= 2.0 * s * kernel.matrix[site]
    return True


@njit(cache=True)
def _sweep(spins, fields, table, L, mu, beta, greedy, sites, uniforms,
           stride, offset, out, n_out, accepted, refresh):
    """Run ``len(sites)`` proposals; snapshot every ``stride``-th into ``out``.

    ``offset`` is the number of proposals already made since the last
    snapshot. Returns (offset, n_out, accepted).
    """
    n = sites.shape[0]
    for k in range(n):
        site = sites[k]
        s = spins[site]
        de = 2.0 * s * (fields[site] + mu)
        ok = de <= 0.0
        if not ok and not greedy:
            ok = uniforms[k] < math.exp(-de * beta)
        if ok:
            spins[site] = -s
            x0 = site // L
            y0 = site - x0 * L
            c = -2.0 * s
            for x in range(L):
                dx = x - x0
                if dx < 0:
                    dx += L
                row = x * L
                for y in range(L):
                    dy = y - y0
                    if dy < 0:
                        dy += L
                    fields[row + y] += c * table[dx, dy]
            accepted += 1
            if accepted % refresh == 0:
                for i in range(L * L):
                    acc = 0.0
                    xi = i // L
                    yi = i - xi * L
                    for j in range(L * L):
                        xj = j // L
                        yj = j - xj * L
                        acc += table[(xi - xj) % L, (yi - yj) % L] * spins[j]
                    fields[i] = acc
        if stride > 0:
            offset += 1
            if offset == stride:
                offset = 0
                if n_out < out.shape[0]:
                    out[n_out, :] = spins
                    n_out += 1
    return offset, n_out, accepted


class Chain:
    """Persistent Metropolis chain; holds the grid and its cached fields."""

    def __init__(self, kernel: CouplingKernel, temperature: float,
                 rng: np.random.Generator, grid: np.ndarray | None = None):
        geom = kernel.geometry
        self.kernel = kernel
        self.temperature = float(temperature)
        self.rng = rng
        if grid is None:
            grid = random_grid(geom.L, rng)
        self.spins = np.asarray(grid, dtype=np.int8).reshape(-1).copy()
        self.fields = all_local_fields(self.spins.astype(np.float64), kernel)
        self.accepted = 0
        self.proposals = 0

    @property
    def grid(self) -> np.ndarray:
        return self.spins.reshape(self.kernel.geometry.L, -1)

    def _run(self, n_steps: int, stride: int, n_keep: int) -> np.ndarray:
        geom = self.kernel.geometry
        N = geom.n_sites
        out = np.empty((n_keep, N), dtype=np.int8)
        greedy = self.temperature == 0
        beta = 0.0 if greedy else 1.0 / self.temperature
        offset, n_out = 0, 0
        remaining = n_steps
        while remaining > 0:
            m = min(remaining, _CHUNK)
            sites = self.rng.integers(0, N, size=m)
            uniforms = self.rng.random(m)
            offset, n_out, self.accepted = _sweep(
                self.spins, self.fields, self.kernel.table, geom.L, float(geom.mu),
                beta, greedy, sites, uniforms, stride, offset, out, n_out, self.accepted,
                REFRESH_EVERY)
            remaining -= m
        self.proposals += n_steps
        return out[:n_out]

    def advance(self, n_steps: int) -> None:
        self._run(n_steps, 0, 0)

    def sample(self, n_samples: int, stride: int) -> np.ndarray:
        L = self.kernel.geometry.L
        return self._run(n_samples * stride, stride, n_samples).reshape(n_samples, L, L)

    def energy(self) -> float:
        s = self.spins.astype(np.float64)
        return float(-0.5 * s @ self.fields - self.kernel.geometry.mu * s.sum())


def run_chain(geom: LatticeGeometry, kernel: CouplingKernel, cfg: McmcConfig,
              n_samples: int) -> SampleSet:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if kernel.geometry != geom:
        raise ValueError("kernel was built for a different lattice")
    burn, stride = cfg.resolved(geom)
    chain = Chain(kernel, cfg.temperature, np.random.default_rng(cfg.seed))
    chain.advance(burn)
    grids = chain.sample(n_samples, stride)
    return SampleSet(grids, cfg.temperature, geom, seed=cfg.seed)


def run_chains(geom: LatticeGeometry, kernel: CouplingKernel, temperatures,
               n_samples: int, seed: int = 0, burn_in_steps: int | None = None,
               stride: int | None = None) -> list[SampleSet]:
    """One independent chain per temperature, seeded ``seed + index``."""
    return [
        run_chain(geom, kernel, McmcConfig(T, burn_in_steps, stride, seed + i), n_samples)
        for i, T in enumerate(temperatures)
    ]


def exact_enumeration(geom: LatticeGeometry, kernel: CouplingKernel, T: float) -> dict:
    """Exact Boltzmann averages by summing over all 2^N states (N <= 16)."""
    N = geom.n_sites
    if N > 16:
        raise ValueError(f"exact enumeration limited to 16 sites, lattice has {N}")
    if T <= 0:
        raise ValueError("exact enumeration needs T > 0")
    states = np.array(list(itertools.product((-1, 1), repeat=N)), dtype=np.float64)
    J = kernel.matrix
    energies = -0.5 * np.einsum("ki,ij,kj->k", states, J, states) - geom.mu * states.sum(1)
    logw = -(energies - energies.min()) / T
    w = np.exp(logw)
    w /= w.sum()
    m = states.mean(axis=1)
    return {
        "m": float(w @ m),
        "abs_m": float(w @ np.abs(m)),
        "energy": float(w @ energies),
        "pair": np.einsum("k,ki,kj->ij", w, states, states),
    }


__all__ = [
    "McmcConfig", "SampleSet", "Chain", "accept", "mcmc_step", "run_chain",
    "run_chains", "exact_enumeration", "SCALING_TEMPS", "TRAINING_TEMPS",
]
