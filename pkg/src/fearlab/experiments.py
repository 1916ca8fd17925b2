"""Headline train/evaluate run and the lookback-window sweep."""

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gbm
from .dataset import chrono_split, windowize
from .importance import NON_FINANCIAL, permutation_importance


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.__cause__ = exc


@dataclass
class SearchSpec:
    trials: int = 20
    space: dict = None  # None -> gbm.DEFAULT_SPACE
    folds: int = 5


@dataclass
class HeadlineConfig:
    window: int = 24
    horizon: int = 1
    train_fraction: float = 0.9
    model: gbm.GbmConfig = field(default_factory=gbm.GbmConfig)
    search: SearchSpec = None  # None -> train ``model`` as given
    importance_repeats: int = 10
    seed: int = 0


def confusion_matrix(y_true, y_pred):
    """Rows are true classes, columns predicted, both ordered (-1, 0, +1)."""
    cm = np.zeros((3, 3), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true) + 1, np.asarray(y_pred) + 1), 1)
    return cm


@dataclass
class HeadlineResult:
    accuracy: float
    confusion: np.ndarray
    model: gbm.GbmModel
    importance: object
    tuned: object
    train_size: int
    test_size: int

    def metrics(self):
        out = {
            "accuracy": self.accuracy,
            "confusion_matrix": self.confusion.tolist(),
            "classes": [-1, 0, 1],
            "test_class_counts": self.confusion.sum(axis=1).tolist(),
            "train_size": self.train_size,
            "test_size": self.test_size,
            "model_config": asdict(self.model.config),
            "baseline_importance_accuracy": self.importance.baseline_accuracy,
            "top_features": [[e.feature[0], e.feature[1], e.mean_drop] for e in self.importance.top(20)],
            "top_non_financial": [[e.feature[0], e.feature[1], e.mean_drop]
                                  for e in self.importance.top(20, NON_FINANCIAL)],
        }
        if self.tuned is not None:
            out["cv_score"] = self.tuned.best_score
        return out


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def train_model(train, config):
    """Fit the configured model, tuning it first when a search is configured."""
    tuned = None
    model_config = config.model
    if config.search is not None:
        tuned = gbm.tune(train, config.search.space, config.search.trials, config.seed,
                         base=config.model, folds=config.search.folds)
        model_config = tuned.best_config
    return gbm.fit(train, model_config), tuned


def run_headline(directions, config=HeadlineConfig()):
    """Window, split, (tune and) fit, then score the held-out tail."""
    ds = _stage("dataset", windowize, directions, config.window, config.horizon)
    train, test = _stage("split", chrono_split, ds, config.train_fraction)
    model, tuned = _stage("train", train_model, train, config)
    labels, _ = _stage("evaluate", model.predict, test.X)
    acc = float(np.mean(labels == test.y))
    report = _stage("importance", permutation_importance, model, test, config.importance_repeats, config.seed)
    return HeadlineResult(acc, confusion_matrix(test.y, labels), model, report, tuned, len(train), len(test))


@dataclass
class SweepRow:
    window: int
    mean_cv_accuracy: float
    std: float
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class SweepResult:
    rows: list
    interval_minutes: float = 5.0

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window_steps", "window_minutes", "mean_cv_accuracy", "std"])
            for r in self.rows:
                w.writerow([r.window, repr(float(r.window * self.interval_minutes)),
                            "" if np.isnan(r.mean_cv_accuracy) else repr(r.mean_cv_accuracy),
                            "" if np.isnan(r.std) else repr(r.std)])


def window_sweep(directions, config=HeadlineConfig(), windows=range(1, 49), model_config=None, folds=5):
    """Cross-validated training-span accuracy for each lookback window.

    All windows share the same sample instants (those admissible for the
    largest window), the same split and the same folds, so only the window
    changes between rows.
    """
    windows = sorted(set(int(w) for w in windows))
    if not windows:
        raise ValueError("no windows given")
    model_config = config.model if model_config is None else model_config
    widest = windows[-1]
    reference = _stage("dataset", windowize, directions, widest, config.horizon)
    n_train = int(np.floor(config.train_fraction * len(reference)))
    interval = next(iter(directions.values())).interval.astype(np.int64) / 60.0
    rows = []
    for w in windows:
        t0 = time.perf_counter()
        try:
            ds = windowize(directions, w, config.horizon)
            ds = ds.subset(slice(widest - w, widest - w + n_train))
            cv = gbm.cross_validate(ds, model_config, folds)
            rows.append(SweepRow(w, cv.mean, cv.std, time.perf_counter() - t0))
        except (ValueError, gbm.GbmError):
            rows.append(SweepRow(w, float("nan"), float("nan"), time.perf_counter() - t0))
    return SweepResult(rows, interval)
