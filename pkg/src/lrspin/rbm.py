"""Restricted Boltzmann machine with +-1 units.

Energy ``E(v, h) = -v.W.h - b_v.v - b_h.h``. For a +-1 unit the conditional
mean is ``tanh(activation)`` and the unit is +1 with probability
``(1 + tanh(activation)) / 2``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

MAX_EXACT_UNITS = 20


@dataclass
class RbmParams:
    W: np.ndarray
    b_v: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b_v = np.asarray(self.b_v, dtype=np.float64)
        self.b_h = np.asarray(self.b_h, dtype=np.float64)
        nv, nh = self.W.shape
        if self.b_v.shape != (nv,) or self.b_h.shape != (nh,):
            raise ValueError("bias shapes do not match the weight matrix")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b_v))
                and np.all(np.isfinite(self.b_h))):
            raise ValueError("RBM parameters must be finite")

    @property
    def n_visible(self) -> int:
        return self.W.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> RbmParams:
        return cls(np.zeros((n_visible, n_hidden)), np.zeros(n_visible), np.zeros(n_hidden))

    @classmethod
    def init(cls, n_visible: int, n_hidden: int, rng: np.random.Generator,
             scale: float = 0.01) -> RbmParams:
        return cls(scale * rng.standard_normal((n_visible, n_hidden)),
                   np.zeros(n_visible), np.zeros(n_hidden))

    def copy(self) -> RbmParams:
        return RbmParams(self.W.copy(), self.b_v.copy(), self.b_h.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b_v, self.b_h])

    def with_flat(self, theta: np.ndarray) -> RbmParams:
        nv, nh = self.W.shape
        return RbmParams(theta[:nv * nh].reshape(nv, nh), theta[nv * nh:nv * nh + nv],
                         theta[nv * nh + nv:])


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 30000
    learning_rate: float = 1e-3
    batch_size: int = 1000
    cd_k: int = 1
    seed: int = 0
    mean_field_data: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.cd_k < 1:
            raise ValueError("batch_size and cd_k must be >= 1")


def rbm_energy(v, h, p: RbmParams) -> float:
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if v.shape != (p.n_visible,) or h.shape != (p.n_hidden,):
        raise ValueError(f"state shapes {v.shape}, {h.shape} do not match "
                         f"RBM {p.n_visible}x{p.n_hidden}")
    return float(-(v @ p.W @ h) - p.b_v @ v - p.b_h @ h)


def _sample_pm(expectation: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.where(rng.random(expectation.shape) < 0.5 * (1.0 + expectation), 1.0, -1.0)


def hidden_given_visible(v, p: RbmParams, rng: np.random.Generator):
    """Conditional mean and a +-1 sample of the hidden layer; ``v`` may be batched."""
    mean = np.tanh(np.asarray(v, dtype=np.float64) @ p.W + p.b_h)
    return mean, _sample_pm(mean, rng)


def visible_given_hidden(h, p: RbmParams, rng: np.random.Generator):
    mean = np.tanh(np.asarray(h, dtype=np.float64) @ p.W.T + p.b_v)
    return mean, _sample_pm(mean, rng)


def cd_update(batch, p: RbmParams, cfg: TrainConfig, rng: np.random.Generator):
    """One CD-k step on a mini-batch. Returns (new params, reconstruction error)."""
    v0 = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if v0.shape[0] == 0:
        raise ValueError("empty batch")
    n = v0.shape[0]
    h0_mean, h0 = hidden_given_visible(v0, p, rng)
    h_data = h0_mean if cfg.mean_field_data else h0

    h = h0
    recon = None
    for _ in range(cfg.cd_k):
        v_mean, v = visible_given_hidden(h, p, rng)
        if recon is None:
            recon = v_mean
        h_mean, h = hidden_given_visible(v, p, rng)
    h_model = h_mean if cfg.mean_field_data else h

    lr = cfg.learning_rate
    dW = (v0.T @ h_data - v.T @ h_model) / n
    dbv = (v0 - v).mean(axis=0)
    dbh = (h_data - h_model).mean(axis=0)
    new = RbmParams(p.W + lr * dW, p.b_v + lr * dbv, p.b_h + lr * dbh)
    return new, float(np.mean((v0 - recon) ** 2))


@dataclass
class TrainResult:
    params: RbmParams
    recon_error: np.ndarray = field(repr=False)


def train(data, cfg: TrainConfig, n_hidden: int | None = None,
          init: RbmParams | None = None) -> TrainResult:
    """CD training over reshuffled mini-batches; deterministic in ``cfg.seed``."""
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds training set of {n}")
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        if n_hidden is None:
            raise ValueError("need n_hidden or initial parameters")
        p = RbmParams.init(data.shape[1], n_hidden, rng)
    else:
        p = init.copy()
    trace = np.empty(cfg.steps)
    order = rng.permutation(n)
    pos = 0
    for step in range(cfg.steps):
        if pos + cfg.batch_size > n:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size
        p, trace[step] = cd_update(data[idx], p, cfg, rng)
    return TrainResult(p, trace)


def all_states(n: int) -> np.ndarray:
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


@dataclass(frozen=True)
class VisibleDistribution:
    """Exact model marginal over every visible state (rows of ``states``)."""

    log_z: float
    states: np.ndarray
    probs: np.ndarray

    @property
    def z(self) -> float:
        return float(np.exp(self.log_z))

    def index(self, v) -> int:
        bits = (np.asarray(v) > 0).astype(int)
        return int(bits @ (1 << np.arange(len(bits))[::-1]))

    def __getitem__(self, v) -> float:
        return float(self.probs[self.index(v)])

    def as_dict(self) -> dict:
        return {tuple(int(x) for x in s): float(q) for s, q in zip(self.states, self.probs)}


def _check_size(p: RbmParams):
    if p.n_visible + p.n_hidden > MAX_EXACT_UNITS:
        raise ValueError(f"exact evaluation limited to {MAX_EXACT_UNITS} units, "
                         f"got {p.n_visible}+{p.n_hidden}")


def _log_unnormalized(states: np.ndarray, p: RbmParams) -> np.ndarray:
    # hidden units summed analytically: sum_h exp(h.a) = prod_a 2 cosh(a)
    act = states @ p.W + p.b_h
    return states @ p.b_v + np.sum(np.logaddexp(act, -act), axis=1)


def exact_partition(p: RbmParams) -> VisibleDistribution:
    _check_size(p)
    states = all_states(p.n_visible)
    logw = _log_unnormalized(states, p)
    log_z = float(logsumexp(logw))
    return VisibleDistribution(log_z, states, np.exp(logw - log_z))


def _as_prob_vector(q, n_visible: int) -> np.ndarray:
    if isinstance(q, dict):
        out = np.zeros(2 ** n_visible)
        weights = 1 << np.arange(n_visible)[::-1]
        for state, prob in q.items():
            bits = (np.asarray(state) > 0).astype(int)
            out[int(bits @ weights)] += prob
        q = out
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (2 ** n_visible,):
        raise ValueError("data distribution has the wrong number of states")
    if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("data distribution must be non-negative and sum to 1")
    return q


def empirical_distribution(data, n_visible: int) -> np.ndarray:
    data = np.atleast_2d(np.asarray(data))
    bits = (data > 0).astype(int)
    idx = bits @ (1 << np.arange(n_visible)[::-1])
    return np.bincount(idx, minlength=2 ** n_visible) / len(idx)


def exact_kl(q, p: RbmParams):
    """KL(q || p_model) and its exact gradient with respect to (W, b_v, b_h).

    The gradient is of the divergence itself, ``<.>_model - <.>_data``;
    descending it is the update direction of contrastive divergence.
    """
    _check_size(p)
    qv = _as_prob_vector(q, p.n_visible)
    dist = exact_partition(p)
    support = qv > 0
    kl = float(np.sum(qv[support] * (np.log(qv[support]) - np.log(dist.probs[support]))))
    states = dist.states
    h_mean = np.tanh(states @ p.W + p.b_h)

    def moments(w):
        return (states.T @ (w[:, None] * h_mean), w @ states, w @ h_mean)

    data = moments(qv)
    model = moments(dist.probs)
    grads = RbmParams(model[0] - data[0], model[1] - data[1], model[2] - data[2])
    return kl, grads


def exact_gradient_step(q, p: RbmParams, learning_rate: float):
    kl, g = exact_kl(q, p)
    new = RbmParams(p.W - learning_rate * g.W, p.b_v - learning_rate * g.b_v,
                    p.b_h - learning_rate * g.b_h)
    return new, kl
