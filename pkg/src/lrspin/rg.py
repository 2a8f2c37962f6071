"""Kadanoff block-spin coarse graining over disjoint 2x2 tiles."""

from __future__ import annotations

import numpy as np

from .geometry import LatticeGeometry
from .mcmc import SampleSet


def block_spin(grids, rng: np.random.Generator, mirror: bool = False) -> np.ndarray:
    """Replace each 2x2 tile by the sign of its sum; ties go to a fair coin.

    Accepts one grid (L, L) or a batch (n, L, L). A coin is drawn for every
    output site whether or not it is tied, so the random stream does not
    depend on the configuration; ``mirror`` negates every coin.
    """
    g = np.asarray(grids)
    single = g.ndim == 2
    if single:
        g = g[None]
    n, L, L2 = g.shape
    if L != L2 or L % 2:
        raise ValueError(f"block spinning needs an even square lattice, got {L}x{L2}")
    sums = g.astype(np.int16).reshape(n, L // 2, 2, L // 2, 2).sum(axis=(2, 4))
    coins = np.where(rng.random(sums.shape) < 0.5, 1, -1)
    if mirror:
        coins = -coins
    out = np.where(sums == 0, coins, np.sign(sums)).astype(np.int8)
    return out[0] if single else out


def rg_flow(samples: SampleSet, steps: int, rng: np.random.Generator) -> list[SampleSet]:
    """Apply ``steps`` rounds of block spinning; one SampleSet per round."""
    L = samples.geometry.L
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if L % (2 ** steps):
        raise ValueError(f"side {L} is not divisible by 2^{steps}")
    out = []
    grids = samples.grids
    for _ in range(steps):
        grids = block_spin(grids, rng)
        geom = LatticeGeometry(grids.shape[1], samples.geometry.alpha, samples.geometry.mu)
        out.append(SampleSet(grids, samples.temperature, geom, samples.seed))
    return out


def block_sources(L: int, level: int, index: int) -> np.ndarray:
    """Boolean (L, L) mask of the original sites summarised by one block spin."""
    size = 2 ** level
    side = L // size
    if not 0 <= index < side * side:
        raise IndexError(f"block index {index} outside {side}x{side} coarse lattice")
    bx, by = divmod(index, side)
    mask = np.zeros((L, L), dtype=bool)
    mask[bx * size:(bx + 1) * size, by * size:(by + 1) * size] = True
    return mask
