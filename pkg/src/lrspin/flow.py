"""RBM flows v1 -> h1 -> v2 -> ... and their measured scaling dimensions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CouplingKernel
from .mcmc import SampleSet
from .observables import FitError, energy_correlator, fit_power_law, spin_correlator
from .rbm import RbmParams, hidden_given_visible, visible_given_hidden
from .thermometer import ThermometerModel, measure


@dataclass
class FlowStep:
    step: int
    visible: SampleSet
    delta_s: float = float("nan")
    delta_s_err: float = float("nan")
    delta_e: float = float("nan")
    delta_e_err: float = float("nan")
    temp_probs: np.ndarray | None = field(default=None, repr=False)
    mean_temperature: float = float("nan")
    argmax_temperature: float = float("nan")


@dataclass
class FlowTrace:
    steps: list[FlowStep]

    def __len__(self):
        return len(self.steps)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps], dtype=np.float64)

    def plateau(self, name: str, window: int = 10) -> tuple[float, float]:
        """Mean and standard deviation of a column over the last ``window`` steps."""
        tail = self.column(name)[-window:]
        return float(np.nanmean(tail)), float(np.nanstd(tail))


def rbm_flow(seed_set: SampleSet, p: RbmParams, length: int,
             rng: np.random.Generator) -> FlowTrace:
    """Alternate hidden and visible sampling; step 1 is the seed ensemble."""
    if length < 1:
        raise ValueError("flow length must be >= 1")
    geom = seed_set.geometry
    if p.n_visible != geom.n_sites:
        raise ValueError(f"RBM has {p.n_visible} visible units, lattice has {geom.n_sites} sites")
    steps = [FlowStep(1, seed_set)]
    v = seed_set.flat()
    for k in range(2, length + 1):
        _, h = hidden_given_visible(v, p, rng)
        _, v = visible_given_hidden(h, p, rng)
        grids = v.reshape(len(v), geom.L, geom.L).astype(np.int8)
        steps.append(FlowStep(k, SampleSet(grids, seed_set.temperature, geom, seed_set.seed)))
    return FlowTrace(steps)


def _fit(profile, r_min, r_max):
    try:
        fit = fit_power_law(profile, r_min, r_max)
    except FitError:
        return float("nan"), float("nan")
    return fit.delta, fit.delta_err


def measure_flow(trace: FlowTrace, kernel: CouplingKernel,
                 thermometer: ThermometerModel | None = None,
                 r_min: float = 1.0, r_max: float | None = None) -> FlowTrace:
    """Fill in scaling dimensions and temperature readings; failed fits become NaN."""
    r_max = kernel.geometry.L / 2 if r_max is None else r_max
    for s in trace.steps:
        s.delta_s, s.delta_s_err = _fit(spin_correlator(s.visible), r_min, r_max)
        s.delta_e, s.delta_e_err = _fit(energy_correlator(s.visible, kernel), r_min, r_max)
        if thermometer is not None:
            reading = measure(thermometer, s.visible)
            s.temp_probs = reading.probs
            s.mean_temperature = reading.mean_temperature
            s.argmax_temperature = reading.argmax_temperature
    return trace
