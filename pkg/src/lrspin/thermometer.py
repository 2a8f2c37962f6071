"""Supervised temperature classifier: one tanh hidden layer, softmax over classes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax


@dataclass
class ThermometerModel:
    temperatures: np.ndarray  # class grid, increasing
    W1: np.ndarray  # (N, H)
    b1: np.ndarray
    W2: np.ndarray  # (H, C)
    b2: np.ndarray
    held_out_accuracy: float = float("nan")

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[0]

    @property
    def width(self) -> int:
        return self.W1.shape[1]

    def params(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def probabilities(self, x) -> np.ndarray:
        x = _inputs(x, self.n_inputs)
        return softmax(np.tanh(x @ self.W1 + self.b1) @ self.W2 + self.b2, axis=1)

    def predict(self, x) -> np.ndarray:
        return self.temperatures[np.argmax(self.probabilities(x), axis=1)]


@dataclass(frozen=True)
class Reading:
    probs: np.ndarray
    temperatures: np.ndarray

    @property
    def mean_temperature(self) -> float:
        return float(self.probs @ self.temperatures)

    @property
    def argmax_temperature(self) -> float:
        return float(self.temperatures[np.argmax(self.probs)])


def _inputs(x, n_inputs: int) -> np.ndarray:
    x = np.asarray(getattr(x, "grids", x), dtype=np.float64)
    x = x.reshape(x.shape[0], -1) if x.ndim > 1 else x[None]
    if x.shape[1] != n_inputs:
        raise ValueError(f"thermometer expects {n_inputs} spins, got {x.shape[1]}")
    return x


def init_model(n_inputs: int, temperatures, width: int, rng: np.random.Generator):
    temps = np.asarray(temperatures, dtype=np.float64)
    C = len(temps)
    return ThermometerModel(
        temps,
        rng.normal(0, 1 / np.sqrt(n_inputs), (n_inputs, width)),
        np.zeros(width),
        # zero read-out: an untrained model predicts the uniform distribution
        np.zeros((width, C)),
        np.zeros(C),
    )


def loss_and_grads(model: ThermometerModel, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradients in ``params()`` order."""
    n = x.shape[0]
    a = np.tanh(x @ model.W1 + model.b1)
    logits = a @ model.W2 + model.b2
    logp = log_softmax(logits, axis=1)
    loss = -float(np.mean(logp[np.arange(n), y]))
    d = np.exp(logp)
    d[np.arange(n), y] -= 1.0
    d /= n
    gW2 = a.T @ d
    gb2 = d.sum(axis=0)
    da = (d @ model.W2.T) * (1.0 - a * a)
    return loss, [x.T @ da, da.sum(axis=0), gW2, gb2]


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # sort by (label, configuration) so the model ignores input ordering
    keys = [x[:, j] for j in range(x.shape[1] - 1, -1, -1)] + [y]
    return np.lexsort(keys)


def train_thermometer(grids, labels, temperatures, epochs: int = 50, lr: float = 1e-3,
                      seed: int = 0, width: int = 64, batch_size: int = 100,
                      held_out: float = 0.1) -> ThermometerModel:
    """Adam on mean cross-entropy; a ``held_out`` fraction is kept for accuracy."""
    temps = np.asarray(temperatures, dtype=np.float64)
    x = np.asarray(grids, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    labels = np.asarray(labels, dtype=np.float64)
    y = np.searchsorted(temps, labels)
    y_ok = (y < len(temps)) & np.isclose(temps[np.minimum(y, len(temps) - 1)], labels)
    if not np.all(y_ok):
        bad = labels[~y_ok][0]
        raise ValueError(f"label {bad} is not one of the class temperatures")

    order = _canonical_order(x, y)
    x, y = x[order], y[order]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    n_test = int(round(held_out * len(y)))
    test, fit = perm[:n_test], perm[n_test:]

    model = init_model(x.shape[1], temps, width, rng)
    params = model.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    t = 0
    for _ in range(epochs):
        shuffled = fit[rng.permutation(len(fit))]
        for start in range(0, len(shuffled), batch_size):
            idx = shuffled[start:start + batch_size]
            _, grads = loss_and_grads(model, x[idx], y[idx])
            t += 1
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= b1
                mi += (1 - b1) * g
                vi *= b2
                vi += (1 - b2) * g * g
                p -= lr * (mi / (1 - b1 ** t)) / (np.sqrt(vi / (1 - b2 ** t)) + eps)
    if n_test:
        pred = np.argmax(model.probabilities(x[test]), axis=1)
        model.held_out_accuracy = float(np.mean(pred == y[test]))
    return model


def train_on_samplesets(sample_sets, epochs: int = 50, lr: float = 1e-3, seed: int = 0,
                        width: int = 64, batch_size: int = 100) -> ThermometerModel:
    temps = sorted({float(s.temperature) for s in sample_sets})
    grids = np.concatenate([s.grids for s in sample_sets])
    labels = np.concatenate([np.full(len(s), float(s.temperature)) for s in sample_sets])
    return train_thermometer(grids, labels, temps, epochs, lr, seed, width, batch_size)


def measure(model: ThermometerModel, samples) -> Reading:
    """Ensemble-averaged class probabilities."""
    probs = model.probabilities(samples).mean(axis=0)
    return Reading(probs, model.temperatures)
