"""Magnetization, two-point correlators and scaling-dimension fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CouplingKernel, all_local_fields, min_image_sq


class FitError(ValueError):
    """Too few usable correlator bins for a power-law fit."""


class NoCrossingError(ValueError):
    pass


@dataclass(frozen=True)
class CorrelatorProfile:
    distance: np.ndarray
    value: np.ndarray
    count: np.ndarray
    std_err: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.distance) <= 0):
            raise ValueError("distances must be strictly increasing")
        if np.any(self.count < 1):
            raise ValueError("every bin needs at least one pair")

    def __len__(self):
        return len(self.distance)

    def at(self, r: float) -> float:
        i = int(np.argmin(np.abs(self.distance - r)))
        if not math.isclose(self.distance[i], r, rel_tol=1e-12, abs_tol=1e-12):
            raise KeyError(r)
        return float(self.value[i])


@dataclass(frozen=True)
class PowerLawFit:
    delta: float
    amplitude: float
    residual: float
    r_range: tuple[float, float]
    n_bins: int
    delta_err: float = float("nan")  # OLS standard error of delta


@dataclass(frozen=True)
class EnergyDensityField:
    values: np.ndarray  # (n, L, L), mean-subtracted
    mean_field: np.ndarray  # (L, L)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


def magnetization(grid) -> float:
    return float(np.mean(grid))


def magnetizations(grids: np.ndarray) -> np.ndarray:
    g = np.asarray(grids)
    return g.reshape(g.shape[0], -1).mean(axis=1)


def _grids(samples) -> np.ndarray:
    return np.asarray(getattr(samples, "grids", samples))


def _autocorrelation(values: np.ndarray) -> np.ndarray:
    """Per-sample circular autocorrelation ``A[k, d] = mean_x v(x) v(x + d)``."""
    n, L, _ = values.shape
    f = np.fft.rfft2(values)
    return np.fft.irfft2(f * np.conj(f), s=(L, L)) / (L * L)


def _bin_by_distance(per_sample: np.ndarray) -> CorrelatorProfile:
    n, L, _ = per_sample.shape
    r2 = min_image_sq(L).reshape(-1)
    keys, inverse, counts = np.unique(r2, return_inverse=True, return_counts=True)
    flat = per_sample.reshape(n, -1)
    onehot = np.zeros((L * L, len(keys)))
    onehot[np.arange(L * L), inverse] = 1.0
    per_bin = (flat @ onehot) / counts
    mean = per_bin.mean(axis=0)
    if n > 1:
        err = per_bin.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        err = np.full(len(keys), np.nan)
    # each displacement stands for L*L ordered site pairs
    return CorrelatorProfile(np.sqrt(keys.astype(np.float64)), mean,
                             counts * L * L, err)


def spin_correlator(samples, connected: bool = False) -> CorrelatorProfile:
    """Raw ``<s_i s_j>`` binned by minimum-image distance.

    With ``connected=True`` the squared ensemble magnetization is subtracted.
    """
    grids = _grids(samples)
    if grids.ndim != 3 or grids.shape[0] < 1:
        raise ValueError("spin_correlator needs a non-empty batch of grids")
    s = grids.astype(np.float64)
    L = s.shape[1]
    # sums of products of +-1 spins are integers; round away FFT noise
    ac = np.rint(_autocorrelation(s) * (L * L)) / (L * L)
    profile = _bin_by_distance(ac)
    if connected:
        m = s.mean()
        profile = CorrelatorProfile(profile.distance, profile.value - m * m,
                                    profile.count, profile.std_err)
    return profile


def energy_density(samples, kernel: CouplingKernel) -> EnergyDensityField:
    """``s_i * sum_j J_ij s_j`` with the per-site ensemble mean removed."""
    grids = _grids(samples)
    if grids.shape[0] < 2:
        raise ValueError("energy density needs at least 2 samples for the ensemble mean")
    s = grids.astype(np.float64)
    raw = s * all_local_fields(s, kernel)
    mean = raw.mean(axis=0)
    return EnergyDensityField(raw - mean, mean)


def energy_correlator(samples, kernel: CouplingKernel) -> CorrelatorProfile:
    eps = energy_density(samples, kernel)
    prof = _bin_by_distance(_autocorrelation(eps.values))
    # a frozen ensemble leaves only rounding noise after mean subtraction
    noise = 1e-12 * kernel.field_sum ** 2
    prof.value[np.abs(prof.value) < noise] = 0.0
    return prof


def fit_power_law(profile: CorrelatorProfile, r_min: float = 1.0,
                  r_max: float | None = None) -> PowerLawFit:
    """Least-squares line through (log r, log C); the slope is -2 * delta."""
    if r_max is None:
        r_max = float(profile.distance.max())
    tol = 1e-9
    use = ((profile.distance >= r_min - tol) & (profile.distance <= r_max + tol)
           & (profile.distance > 0) & (profile.value > 0) & np.isfinite(profile.value))
    if use.sum() < 3:
        raise FitError(f"only {int(use.sum())} positive bins in [{r_min}, {r_max}]")
    x = np.log(profile.distance[use])
    y = np.log(profile.value[use])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    k = len(x)
    delta_err = float("nan")
    if k > 2:
        sxx = np.sum((x - x.mean()) ** 2)
        delta_err = float(np.sqrt(np.sum(resid ** 2) / (k - 2) / sxx) / 2)
    return PowerLawFit(
        delta=float(-slope / 2),
        amplitude=float(math.exp(intercept)),
        residual=float(np.sqrt(np.mean(resid ** 2))),
        r_range=(float(r_min), float(r_max)),
        n_bins=k,
        delta_err=delta_err,
    )


def scaling_dimensions(samples, kernel: CouplingKernel, r_min: float = 1.0,
                       r_max: float | None = None, connected: bool = False):
    """(delta_s, delta_eps) for one ensemble; NaN where the fit fails."""
    L = kernel.geometry.L
    r_max = L / 2 if r_max is None else r_max
    out = []
    for profile in (spin_correlator(samples, connected), energy_correlator(samples, kernel)):
        try:
            out.append(fit_power_law(profile, r_min, r_max).delta)
        except FitError:
            out.append(float("nan"))
    return tuple(out)


def find_tc(curve, direction: str = "up") -> float:
    """Temperature where delta_eps first crosses 1, scanning upward in T.

    ``direction="up"`` only accepts a rise through 1 (slower-than-critical
    decay turning faster); in the ordered phase the mean-subtracted energy
    correlator can dip through 1 from above, which ``"any"`` would report.
    """
    if direction not in ("up", "any"):
        raise ValueError(f"direction must be 'up' or 'any', got {direction!r}")
    pts = sorted((float(t), float(d)) for t, d in curve if np.isfinite(d))
    for (t0, d0), (t1, d1) in zip(pts, pts[1:]):
        up = d0 < 1.0 <= d1
        down = d0 > 1.0 >= d1
        if up or (direction == "any" and down):
            return t0 + (1.0 - d0) * (t1 - t0) / (d1 - d0)
    raise NoCrossingError("delta_eps never crosses 1 on the supplied curve")


def interpolate(curve, t: float) -> float:
    pts = sorted((float(a), float(b)) for a, b in curve if np.isfinite(b))
    ts, ys = zip(*pts)
    return float(np.interp(t, ts, ys))
