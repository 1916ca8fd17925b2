"""Windowed direction features, next-step targets and the chronological split."""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .series import format_time, parse_times

TARGET = "vxbt"


def column_name(series, lag):
    return f"{series}_direction,t-{lag}"


@dataclass
class LabeledDataset:
    feature_names: list  # (series, lag) pairs, series-major then lag ascending
    X: np.ndarray
    y: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        self.feature_names = [tuple(f) for f in self.feature_names]
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int8)
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise ValueError("X width must match feature_names")
        if not (self.X.shape[0] == self.y.size == self.timestamps.size):
            raise ValueError("X, y and timestamps differ in length")

    def __len__(self):
        return self.y.size

    def subset(self, index):
        return LabeledDataset(self.feature_names, self.X[index], self.y[index], self.timestamps[index])

    @property
    def columns(self):
        return [column_name(s, k) for s, k in self.feature_names]


def windowize(directions, window=24, horizon=1, target=TARGET):
    """Samples of the last ``window`` labels of every series and the target ``horizon`` steps ahead.

    The sample at index ``t`` carries feature ``(s, k) = directions[s][t - k]``
    for ``k = 0 .. window-1`` and target ``directions[target][t + horizon]``;
    its timestamp is that of ``t``.
    """
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    if target not in directions:
        raise ValueError(f"target series {target!r} missing")
    names = list(directions)
    first = directions[names[0]]
    for name in names[1:]:
        d = directions[name]
        if d.start != first.start or d.interval != first.interval or len(d) != len(first):
            raise ValueError(f"series {name!r} is misaligned with {names[0]!r}")
    L = len(first)
    if window + horizon >= L:
        raise ValueError(f"window + horizon ({window + horizon}) must be below the series length ({L})")
    t = np.arange(window - 1, L - horizon)
    lags = np.arange(window)
    blocks = [directions[name].labels[t[:, None] - lags[None, :]] for name in names]
    X = np.concatenate(blocks, axis=1).astype(np.float64)
    y = directions[target].labels[t + horizon]
    feature_names = [(name, int(k)) for name in names for k in lags]
    return LabeledDataset(feature_names, X, y, first.timestamps[t])


def chrono_split(ds, train_fraction=0.9):
    """First ``floor(fraction * n)`` samples train, the rest test; no shuffling."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    cut = int(np.floor(train_fraction * len(ds)))
    if cut == 0 or cut == len(ds):
        raise ValueError("split leaves an empty side")
    return ds.subset(slice(0, cut)), ds.subset(slice(cut, None))


def save_dataset(ds, directory, split_index=None, extra=None):
    """Write ``features.csv``, ``targets.csv`` and ``dataset.json``."""
    directory.mkdir(parents=True, exist_ok=True)
    stamps = [format_time(t) for t in ds.timestamps]
    with open(directory / "features.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *ds.columns])
        for ts, row in zip(stamps, ds.X.astype(np.int8).tolist()):
            w.writerow([ts, *row])
    with open(directory / "targets.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "target"])
        for ts, v in zip(stamps, ds.y.tolist()):
            w.writerow([ts, v])
    manifest = {
        "columns": ds.columns,
        "features": [[s, k] for s, k in ds.feature_names],
        "samples": len(ds),
        "split_index": split_index,
    }
    if extra:
        manifest.update(extra)
    (directory / "dataset.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(directory):
    manifest = json.loads((directory / "dataset.json").read_text())
    with open(directory / "features.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[1:] != manifest["columns"]:
        raise ValueError("features.csv header disagrees with dataset.json")
    stamps = parse_times([r[0] for r in body])
    X = np.array([[int(v) for v in r[1:]] for r in body], dtype=np.float64).reshape(len(body), len(header) - 1)
    with open(directory / "targets.csv", newline="") as fh:
        trows = list(csv.reader(fh))[1:]
    y = np.array([int(r[1]) for r in trows], dtype=np.int8)
    ds = LabeledDataset([tuple(f) for f in manifest["features"]], X, y, stamps)
    return ds, manifest
