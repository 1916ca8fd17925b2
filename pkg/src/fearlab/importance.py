"""Permutation importance of (series, lag) features for a trained model."""

import csv
from dataclasses import dataclass

import numpy as np

NON_FINANCIAL = ("tweet_volume", "tweet_sentiment", "trends")


@dataclass(frozen=True)
class ImportanceEntry:
    feature: tuple  # (series, lag)
    mean_drop: float
    std_drop: float
    repeats: int


@dataclass
class ImportanceReport:
    baseline_accuracy: float
    entries: list  # in feature-column order

    def ranked(self):
        """Entries by mean drop, descending; column order breaks ties."""
        order = sorted(range(len(self.entries)), key=lambda i: (-self.entries[i].mean_drop, i))
        return [self.entries[i] for i in order]

    def top(self, k=20, series=None):
        rows = self.ranked()
        if series is not None:
            rows = [e for e in rows if e.feature[0] in series]
        return rows[:k]

    def write_csv(self, path, entries=None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "lag", "mean_drop", "std_drop"])
            for e in self.ranked() if entries is None else entries:
                w.writerow([e.feature[0], e.feature[1], repr(e.mean_drop), repr(e.std_drop)])


def _shuffle(rng, n):
    return rng.permutation(n)


def permutation_importance(model, test, repeats=10, seed=0, permuter=_shuffle):
    """Accuracy drop when each feature column alone is shuffled, ``repeats`` times.

    Each column draws from its own stream seeded by ``(seed, column)`` so the
    result does not depend on evaluation order.  Columns no tree splits on
    cannot change a prediction and get a drop of exactly zero without being
    evaluated.  ``permuter(rng, n)`` returns the row permutation to apply.
    """
    if len(test) == 0:
        raise ValueError("test set is empty")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = np.ascontiguousarray(test.X, dtype=np.float64)
    y = test.y
    labels, _ = model.predict(X)
    baseline = float(np.mean(labels == y))
    used = model.used_features()
    entries = []
    work = X.copy()
    for j, name in enumerate(test.feature_names):
        if j not in used:
            entries.append(ImportanceEntry(tuple(name), 0.0, 0.0, repeats))
            continue
        rng = np.random.default_rng([seed, j])
        drops = np.empty(repeats)
        original = X[:, j]
        for r in range(repeats):
            work[:, j] = original[permuter(rng, X.shape[0])]
            pred, _ = model.predict(work)
            drops[r] = baseline - float(np.mean(pred == y))
        work[:, j] = original
        entries.append(ImportanceEntry(tuple(name), float(drops.mean()), float(drops.std()), repeats))
    return ImportanceReport(baseline, entries)
