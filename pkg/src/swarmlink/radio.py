"""RSSI channel model, distance estimation, and interval-accuracy statistics.

The channel is log-distance path loss with additive gaussian noise:
``rssi = rssi0 - 10*n*log10(d/d0) + N(0, sigma)``. Accuracy of a set of
samples against a dB interval is the fraction that fall inside it, which is
also the metric reported by the accuracy tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import RngStream, World


@dataclass(frozen=True)
class ChannelParams:
    rssi0: float
    d0: float = 1.0
    path_loss_exponent: float = 2.5
    noise_sigma: float = 3.7

    def __post_init__(self):
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class RssiSample:
    tick: int
    pair: tuple[int, int]
    true_distance: float
    rssi: float


@dataclass(frozen=True)
class RssiInterval:
    """Closed dB interval, e.g. the table row '-14 <-> -20' is (-20, -14)."""

    low: float
    high: float

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"interval low {self.low} > high {self.high}")

    def contains(self, rssi: float) -> bool:
        return self.low <= rssi <= self.high

    @property
    def width(self) -> float:
        return self.high - self.low

    def label(self) -> str:
        return f"{_fmt_db(self.high)} <-> {_fmt_db(self.low)}"


def _fmt_db(v: float) -> str:
    return f"{int(v)}" if float(v).is_integer() else f"{v}"


@dataclass(frozen=True)
class AccuracyRow:
    distance: float
    interval: RssiInterval
    successes: int
    failures: int

    @property
    def total(self) -> int:
        return self.successes + self.failures

    @property
    def accuracy(self) -> float | None:
        """Success ratio in [0, 1], or None for an empty sample set."""
        if self.total == 0:
            return None
        return self.successes / self.total

    def accuracy_pct(self) -> str:
        """Percentage with two decimals and a decimal comma, e.g. '60,95%'."""
        acc = self.accuracy
        value = 0.0 if acc is None else 100.0 * acc
        return f"{value:.2f}".replace(".", ",") + "%"


def noiseless_rssi(params: ChannelParams, distance: float) -> float:
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    return params.rssi0 - 10.0 * params.path_loss_exponent * math.log10(distance / params.d0)


def sample_rssi(params: ChannelParams, distance: float, rng: RngStream) -> float:
    """Draw one noisy RSSI reading at the given true distance."""
    mean = noiseless_rssi(params, distance)
    if params.noise_sigma == 0.0:
        return mean
    return mean + float(rng.normal(0.0, params.noise_sigma))


def sample_rssi_batch(params: ChannelParams, distance: float, count: int,
                      rng: RngStream) -> np.ndarray:
    """Vectorized :func:`sample_rssi`; one stream draw of ``count`` values."""
    mean = noiseless_rssi(params, distance)
    if params.noise_sigma == 0.0:
        return np.full(count, mean)
    return mean + np.asarray(rng.normal(0.0, params.noise_sigma, count))


def estimate_distance(params: ChannelParams, rssi: float) -> float:
    """Invert the noiseless channel model."""
    return params.d0 * 10.0 ** ((params.rssi0 - rssi) / (10.0 * params.path_loss_exponent))


def accumulate_interval_stats(samples, interval: RssiInterval) -> AccuracyRow:
    """Count how many samples stay inside the interval.

    Accepts RssiSample objects or raw dB floats; all samples must share one
    true distance (0.0 recorded for a raw/empty set with no distance).
    """
    rssis = []
    distance = 0.0
    for s in samples:
        if isinstance(s, RssiSample):
            if rssis and s.true_distance != distance:
                raise ValueError("samples must share one true distance")
            distance = s.true_distance
            rssis.append(s.rssi)
        else:
            rssis.append(float(s))
    successes = sum(1 for r in rssis if interval.contains(r))
    return AccuracyRow(distance=distance, interval=interval,
                       successes=successes, failures=len(rssis) - successes)


def calibrate_params(anchor_points, d0: float = 1.0,
                     noise_sigma: float = 3.7) -> ChannelParams:
    """Least-squares fit of (rssi0, n) from (distance, dB) anchors.

    The model is linear in log10(distance), so the fit is an ordinary
    least-squares solve. noise_sigma is not fitted; it stays a config knob.
    """
    anchors = list(anchor_points)
    distances = {d for d, _ in anchors}
    if len(distances) < 2:
        raise ValueError("calibration needs at least 2 distinct distances")
    d = np.array([a[0] for a in anchors], dtype=float)
    y = np.array([a[1] for a in anchors], dtype=float)
    if np.any(d <= 0):
        raise ValueError("anchor distances must be positive")
    design = np.column_stack([np.ones_like(d), -10.0 * np.log10(d / d0)])
    (rssi0, n), *_ = np.linalg.lstsq(design, y, rcond=None)
    return ChannelParams(rssi0=float(rssi0), d0=d0, path_loss_exponent=float(n),
                         noise_sigma=noise_sigma)


class RadioSampler:
    """Kernel radio phase: per-tick RSSI sampling for registered UAV pairs.

    Each ordered pair (observer, target) owns a labelled rng stream, so the
    two ends of a link log different noise, as two physical receivers would.
    The latest estimate feeds the separation controller; full sample logs are
    kept only when ``collect`` is set.
    """

    def __init__(self, params: ChannelParams, pairs, seed: int, collect: bool = False):
        self.params = params
        self.pairs = sorted(pairs)
        self.collect = collect
        self.samples: dict[tuple[int, int], list[RssiSample]] = {p: [] for p in self.pairs}
        self.last_estimate: dict[tuple[int, int], float] = {}
        self.last_rssi: dict[tuple[int, int], float] = {}
        self._streams = {p: RngStream(seed, f"rssi/{p[0]}->{p[1]}") for p in self.pairs}

    def sample(self, world: World, now: int) -> None:
        for pair in self.pairs:
            i, j = pair
            d = world.distance(i, j)
            if d <= 0.0:
                continue
            rssi = sample_rssi(self.params, d, self._streams[pair])
            self.last_rssi[pair] = rssi
            self.last_estimate[pair] = estimate_distance(self.params, rssi)
            if self.collect:
                self.samples[pair].append(RssiSample(now, pair, d, rssi))
