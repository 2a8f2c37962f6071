"""Greedily trained stack of RBMs and visible-hidden correlation maps.

The maps compare what a hidden unit of layer l summarises with what a block
spin after l rounds of block spinning summarises.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mcmc import SampleSet
from .rbm import RbmParams, TrainConfig, hidden_given_visible, train
from .rg import block_spin

FULL_LAYERS = (4096, 1024, 256, 64)
DESK_LAYERS = (1024, 256, 64, 16)


@dataclass(frozen=True)
class StackSpec:
    layer_sizes: tuple[int, ...] = DESK_LAYERS
    configs: tuple[TrainConfig, ...] = field(default_factory=tuple)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("a stack needs at least one layer")
        for a, b in zip(sizes, sizes[1:]):
            if a != 4 * b:
                raise ValueError(f"layer {a} -> {b} does not shrink by a factor of 4")
        side = int(round(np.sqrt(sizes[0])))
        if side * side != sizes[0]:
            raise ValueError(f"input layer {sizes[0]} is not a square lattice")
        if not self.configs:
            object.__setattr__(self, "configs", (TrainConfig(),) * self.n_layers)
        if len(self.configs) != self.n_layers:
            raise ValueError("need one TrainConfig per layer")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def side(self) -> int:
        return int(round(np.sqrt(self.layer_sizes[0])))


@dataclass
class TrainedStack:
    params: list[RbmParams]
    # hidden states fed forward during training, one (n, N_h) array per layer
    hidden: list[np.ndarray] = field(repr=False)
    recon_error: list[np.ndarray] = field(repr=False)


def _propagate_seed(cfg: TrainConfig) -> int:
    return cfg.seed + 1_000_003


def train_stack(samples: SampleSet, spec: StackSpec) -> TrainedStack:
    """Layer-wise CD training; sampled hidden states of layer l train layer l + 1."""
    if samples.geometry.n_sites != spec.layer_sizes[0]:
        raise ValueError(f"samples have {samples.geometry.n_sites} sites, stack expects "
                         f"{spec.layer_sizes[0]}")
    data = samples.flat()
    params, hidden, traces = [], [], []
    for layer, cfg in enumerate(spec.configs):
        result = train(data, cfg, n_hidden=spec.layer_sizes[layer + 1])
        params.append(result.params)
        traces.append(result.recon_error)
        _, data = hidden_given_visible(data, result.params, np.random.default_rng(_propagate_seed(cfg)))
        hidden.append(data)
    return TrainedStack(params, hidden, traces)


def propagate(samples, stack_params, layer: int, rng: np.random.Generator,
              mean_field: bool = False) -> np.ndarray:
    """Hidden states of ``layer`` (1-based) for every sample, shape (n, N_h)."""
    if not 1 <= layer <= len(stack_params):
        raise IndexError(f"layer {layer} outside 1..{len(stack_params)}")
    x = np.asarray(getattr(samples, "grids", samples), dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    for p in stack_params[:layer]:
        mean, sample = hidden_given_visible(x, p, rng)
        x = mean if mean_field else sample
    return x


def coarse_states(samples, layer: int, rng: np.random.Generator) -> np.ndarray:
    """Block spins after ``layer`` rounds, flattened to (n, N_h)."""
    if layer < 1:
        raise IndexError("layer must be >= 1")
    g = np.asarray(getattr(samples, "grids", samples))
    if g.shape[1] % (2 ** layer):
        raise IndexError(f"{g.shape[1]}x{g.shape[1]} lattice cannot be blocked {layer} times")
    for _ in range(layer):
        g = block_spin(g, rng)
    return g.reshape(g.shape[0], -1).astype(np.float64)


@dataclass(frozen=True)
class VhCorrelationMap:
    layer: int
    index: int
    values: np.ndarray  # (L, L) over the input lattice


def vh_matrix(samples, hidden: np.ndarray) -> np.ndarray:
    """All ``<v_i h_a>`` at once, shape (N_v, N_h)."""
    v = np.asarray(getattr(samples, "grids", samples), dtype=np.float64)
    v = v.reshape(v.shape[0], -1)
    return v.T @ hidden / v.shape[0]


def _one_map(samples, hidden, layer, index) -> VhCorrelationMap:
    if not 0 <= index < hidden.shape[1]:
        raise IndexError(f"hidden index {index} outside 0..{hidden.shape[1] - 1}")
    g = np.asarray(getattr(samples, "grids", samples))
    L = g.shape[1]
    vals = vh_matrix(g, hidden[:, index:index + 1])[:, 0].reshape(L, L)
    return VhCorrelationMap(layer, index, vals)


def vh_map_rbm(samples, stack_params, layer: int, index: int,
               rng: np.random.Generator, mean_field: bool = False) -> VhCorrelationMap:
    return _one_map(samples, propagate(samples, stack_params, layer, rng, mean_field), layer, index)


def vh_map_rg(samples, layer: int, index: int, rng: np.random.Generator) -> VhCorrelationMap:
    return _one_map(samples, coarse_states(samples, layer, rng), layer, index)


def all_maps(samples, hidden: np.ndarray) -> np.ndarray:
    """Every map for one layer, shape (N_h, L, L)."""
    g = np.asarray(getattr(samples, "grids", samples))
    L = g.shape[1]
    return vh_matrix(g, hidden).T.reshape(-1, L, L)


def torus_distance_to_block(L: int, mask: np.ndarray) -> np.ndarray:
    """Minimum-image distance from every site to the nearest site of ``mask``."""
    xs, ys = np.nonzero(mask)
    d = np.arange(L)
    best = np.full((L, L), np.inf)
    for x, y in zip(xs, ys):
        dx = np.minimum(np.abs(d - x), L - np.abs(d - x))
        dy = np.minimum(np.abs(d - y), L - np.abs(d - y))
        best = np.minimum(best, np.sqrt(dx[:, None] ** 2 + dy[None, :] ** 2))
    return best


def locality_contrast(vh: np.ndarray, source: np.ndarray, far: float) -> tuple[float, float]:
    """(mean |map| over the source block, mean |map| beyond distance ``far``)."""
    L = vh.shape[0]
    dist = torus_distance_to_block(L, source)
    return float(np.mean(np.abs(vh[source]))), float(np.mean(np.abs(vh[dist > far])))


def rank_by_variance(maps: np.ndarray) -> np.ndarray:
    """Map indices ordered by decreasing spatial variance (most structured first)."""
    var = maps.reshape(maps.shape[0], -1).var(axis=1)
    return np.argsort(-var, kind="stable")
