"""Min-max normalisation and ternary direction labels with a class-balancing threshold."""

from dataclasses import dataclass

import numpy as np

from .series import UniformSeries, to_datetime64, to_interval

EPS = 1e-9
CLASSES = (-1, 0, 1)


@dataclass
class DirectionSeries:
    """Labels in {-1, 0, +1}; ``labels[k]`` describes the move ending at ``start + k*interval``."""

    start: np.datetime64
    interval: np.timedelta64
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.start = to_datetime64(self.start)
        self.interval = to_interval(self.interval)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if not np.isin(self.labels, CLASSES).all():
            raise ValueError("labels must be drawn from {-1, 0, +1}")

    def __len__(self):
        return self.labels.size

    @property
    def timestamps(self):
        return self.start + np.arange(self.labels.size) * self.interval


@dataclass
class ThresholdFit:
    theta: float
    class_counts: tuple  # counts of (-1, 0, +1)
    imbalance: int
    degenerate: bool = False  # no non-zero changes to balance

    def as_dict(self, series=""):
        return {
            "series": series,
            "theta": self.theta,
            "counts": list(self.class_counts),
            "imbalance": self.imbalance,
            "degenerate": self.degenerate,
        }


def _fit_slice(fit_range, n):
    if fit_range is None:
        return slice(0, n)
    if isinstance(fit_range, slice):
        return fit_range
    lo, hi = fit_range
    return slice(lo, hi)


def minmax_normalize(series, fit_range=None):
    """Affine map sending the min/max over ``fit_range`` to 0/1.

    Values outside the fitted window are mapped by the same affine map and
    may leave [0, 1].
    """
    window = series.values[_fit_slice(fit_range, len(series))]
    if window.size == 0 or np.isnan(window).all():
        raise ValueError("empty normalisation window")
    lo, hi = np.nanmin(window), np.nanmax(window)
    if not hi > lo:
        raise ValueError(f"series {series.name!r} is constant over the normalisation window")
    return series.with_values((series.values - lo) / (hi - lo))


def pct_changes(values):
    values = np.asarray(values, dtype=np.float64)
    prev = values[:-1]
    return (values[1:] - prev) / np.maximum(np.abs(prev), EPS)


def label_directions(series, theta):
    """+1 when the one-step percentage change exceeds ``theta``, -1 below ``-theta``, else 0."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    if np.isnan(series.values).any():
        raise ValueError(f"series {series.name!r} has gaps; fill before labelling")
    c = pct_changes(series.values)
    labels = np.zeros(c.size, dtype=np.int8)
    labels[c > theta] = 1
    labels[c < -theta] = -1
    return DirectionSeries(series.start + series.interval, series.interval, labels, series.name)


def class_counts_for(changes, thetas):
    """Counts of (-1, 0, +1) labels for each candidate threshold (vectorised)."""
    changes = np.asarray(changes, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    pos = np.sort(changes[changes > 0])
    neg = np.sort(-changes[changes < 0])
    plus = pos.size - np.searchsorted(pos, thetas, side="right")
    minus = neg.size - np.searchsorted(neg, thetas, side="right")
    zero = changes.size - plus - minus
    return np.stack([minus, zero, plus], axis=1)


def fit_threshold(series):
    """Threshold over the distinct absolute changes that best equalises the three classes.

    Every candidate is scored; the smallest theta attaining the minimum
    imbalance (max count - min count) wins.
    """
    if len(series) < 3:
        raise ValueError("need at least three observations")
    if np.isnan(series.values).any():
        raise ValueError(f"series {series.name!r} has gaps; fill before fitting")
    c = pct_changes(series.values)
    candidates = np.unique(np.abs(c))
    counts = class_counts_for(c, candidates)
    imbalance = counts.max(axis=1) - counts.min(axis=1)
    k = int(np.argmin(imbalance))
    degenerate = not np.any(c != 0)
    return ThresholdFit(float(candidates[k]), tuple(int(x) for x in counts[k]), int(imbalance[k]), degenerate)


def head(series, n):
    return UniformSeries(series.start, series.interval, series.values[:n], series.name)


def label_series(series, fit_stop=None):
    """Fill gaps, normalise, fit the threshold and label one raw series.

    ``fit_stop`` limits the normalisation and threshold fit to the first
    ``fit_stop`` observations (leak-safe); ``None`` fits on everything.
    Returns ``(directions, fit, normalised)``.
    """
    dense = series.filled()
    stop = len(dense) if fit_stop is None else int(fit_stop)
    norm = minmax_normalize(dense, (0, stop))
    fit = fit_threshold(head(norm, stop))
    return label_directions(norm, fit.theta), fit, norm
