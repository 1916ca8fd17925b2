"""Time helpers and the fixed-interval series carrier shared by every stage."""

import csv
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

FIVE_MINUTES = np.timedelta64(300, "s")


def to_datetime64(value):
    """Coerce an ISO string, datetime or datetime64 to ``datetime64[s]`` (UTC)."""
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[s]")
    ts = pd.Timestamp(value)
    if ts.tzinfo is not None:
        ts = ts.tz_convert("UTC").tz_localize(None)
    return np.datetime64(ts.floor("s").to_datetime64(), "s")


def parse_times(strings):
    """Vectorised ISO-8601 parse; unparseable entries become NaT."""
    parsed = pd.to_datetime(pd.Series(strings, dtype=object), utc=True, errors="coerce", format="ISO8601")
    return parsed.dt.tz_localize(None).to_numpy().astype("datetime64[s]")


def to_float(values):
    """Correctly rounded string -> float64; unparseable entries become NaN.

    pandas' fast parser is not exact for 17-digit reprs, which would break
    write/read round trips.
    """
    arr = np.asarray(values, dtype=object)
    try:
        return arr.astype(np.float64)
    except (TypeError, ValueError):
        out = np.empty(arr.size)
        for i, v in enumerate(arr.tolist()):
            try:
                out[i] = float(v)
            except (TypeError, ValueError):
                out[i] = np.nan
        return out


def format_time(t):
    return str(np.datetime64(t, "s")) + "Z"


def to_interval(value):
    if isinstance(value, np.timedelta64):
        return value.astype("timedelta64[s]")
    if isinstance(value, (int, np.integer)):
        return np.timedelta64(int(value), "s")
    return np.timedelta64(int(pd.Timedelta(value).total_seconds()), "s")


@dataclass(frozen=True)
class Grid:
    """Half-open schedule ``[start, end)`` stepped by ``interval``."""

    start: np.datetime64
    end: np.datetime64
    interval: np.timedelta64 = FIVE_MINUTES

    def __post_init__(self):
        object.__setattr__(self, "start", to_datetime64(self.start))
        object.__setattr__(self, "end", to_datetime64(self.end))
        object.__setattr__(self, "interval", to_interval(self.interval))
        if self.interval <= np.timedelta64(0, "s"):
            raise ValueError("grid interval must be positive")
        if not self.start < self.end:
            raise ValueError("grid start must precede end")

    @property
    def times(self):
        return np.arange(self.start, self.end, self.interval)

    def __len__(self):
        span = (self.end - self.start).astype(np.int64)
        return int(math.ceil(span / self.interval.astype(np.int64)))


@dataclass
class UniformSeries:
    """Values on ``start + k * interval``; NaN marks a gap."""

    start: np.datetime64
    interval: np.timedelta64
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.start = to_datetime64(self.start)
        self.interval = to_interval(self.interval)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.interval <= np.timedelta64(0, "s"):
            raise ValueError("interval must be positive")
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("series needs at least one value")

    @classmethod
    def on_grid(cls, grid, values, name=""):
        return cls(grid.start, grid.interval, values, name)

    @property
    def timestamps(self):
        return self.start + np.arange(self.values.size) * self.interval

    def __len__(self):
        return self.values.size

    @property
    def gaps(self):
        return int(np.isnan(self.values).sum())

    def with_values(self, values, name=None):
        return UniformSeries(self.start, self.interval, values, self.name if name is None else name)

    def filled(self):
        """Forward-fill gaps, then back-fill any leading gap from the first observation."""
        v = self.values.copy()
        ok = ~np.isnan(v)
        if not ok.any():
            raise ValueError(f"series {self.name!r} has no observations")
        last = np.where(ok, np.arange(v.size), 0)
        np.maximum.accumulate(last, out=last)
        v = v[last]
        first = int(np.argmax(ok))
        v[:first] = v[first]
        return self.with_values(v)


def write_series_csv(series, path, value_column="value"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", value_column])
        for t, v in zip(series.timestamps, series.values):
            w.writerow([format_time(t), "" if np.isnan(v) else repr(float(v))])


def read_series_csv(path, name=""):
    """Read a ``timestamp,<value>`` file written on a uniform grid."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if df.shape[1] != 2 or df.columns[0] != "timestamp":
        raise ValueError(f"{path}: expected header 'timestamp,<value>'")
    times = parse_times(df.iloc[:, 0])
    if np.isnat(times).any():
        raise ValueError(f"{path}: unparseable timestamp")
    vals = to_float(df.iloc[:, 1])
    if times.size < 1:
        raise ValueError(f"{path}: empty series")
    if times.size > 1:
        steps = np.diff(times)
        if not (steps == steps[0]).all() or steps[0] <= np.timedelta64(0, "s"):
            raise ValueError(f"{path}: timestamps are not on a uniform increasing grid")
        interval = steps[0]
    else:
        interval = FIVE_MINUTES
    return UniformSeries(times[0], interval, vals, name)


def resample_to_grid(times, values, grid, name=""):
    """Sample an irregular series on the grid by last observation at or before each instant."""
    times = np.asarray(times, dtype="datetime64[s]")
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(times, kind="stable")
    times, values = times[order], values[order]
    pos = np.searchsorted(times, grid.times, side="right") - 1
    out = np.where(pos >= 0, values[np.clip(pos, 0, None)], np.nan)
    return UniformSeries.on_grid(grid, out, name)
