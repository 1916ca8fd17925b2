"""Multiclass gradient boosting over regression trees, with CV and hyperparameter search.

Each stage fits one squared-error regression tree per class to the softmax
cross-entropy residuals ``onehot(y) - p`` and sets leaf values with a single
Newton step for multinomial deviance.  Features are pre-binned (at most
``max_bins`` bins each); ternary direction features bin exactly.
"""

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels

log = logging.getLogger(__name__)

CLASSES = np.array([-1, 0, 1], dtype=np.int8)
# argmax priority on ties: class 0, then -1, then +1
_TIE_ORDER = np.array([1, 0, 2])
MODEL_FORMAT = "fearlab-gbm"
MODEL_VERSION = 1
_PRIOR_FLOOR = 1e-12


class GbmError(ValueError):
    pass


@dataclass(frozen=True)
class GbmConfig:
    learning_rate: float = 0.1
    n_stages: int = 100
    max_depth: int = 3
    min_samples_leaf: int = 1
    subsample: float = 1.0
    seed: int = 0
    max_bins: int = 64

    def __post_init__(self):
        errors = []
        if not self.learning_rate > 0:
            errors.append("learning_rate must be > 0")
        if self.n_stages < 1:
            errors.append("n_stages must be >= 1")
        if self.max_depth < 1:
            errors.append("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            errors.append("min_samples_leaf must be >= 1")
        if not 0 < self.subsample <= 1:
            errors.append("subsample must lie in (0, 1]")
        if not 2 <= self.max_bins <= 256:
            errors.append("max_bins must lie in [2, 256]")
        if errors:
            raise ValueError("; ".join(errors))


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __len__(self):
        return self.feature.size

    def as_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


def _flatten(trees):
    """Concatenate trees into one node table; returns arrays plus per-tree roots."""
    sizes = np.array([len(t) for t in trees], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    if not trees:
        empty_i = np.zeros(0, dtype=np.int64)
        return empty_i, np.zeros(0), empty_i, empty_i, np.zeros(0), empty_i
    feature = np.concatenate([t.feature for t in trees])
    threshold = np.concatenate([t.threshold for t in trees])
    left = np.concatenate([np.where(t.feature >= 0, t.left + o, -1) for t, o in zip(trees, offsets)])
    right = np.concatenate([np.where(t.feature >= 0, t.right + o, -1) for t, o in zip(trees, offsets)])
    value = np.concatenate([t.value for t in trees])
    return feature, threshold, left, right, value, offsets


def softmax(scores):
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(y):
    y = np.asarray(y)
    return (y[:, None] == CLASSES[None, :]).astype(np.float64)


def cross_entropy(y, scores):
    """Mean multiclass cross-entropy of labels ``y`` under raw class scores."""
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.mean(np.sum(one_hot(y) * logp, axis=1)))


def residuals(y, scores):
    """Negative gradient of the per-sample cross-entropy w.r.t. the scores."""
    return one_hot(y) - softmax(scores)


@dataclass
class GbmModel:
    config: GbmConfig
    base_scores: np.ndarray
    trees: list  # trees[stage][class]
    n_features: int
    classes: tuple = (-1, 0, 1)
    _flat: tuple = field(default=None, repr=False, compare=False)

    @property
    def n_stages(self):
        return len(self.trees)

    def used_features(self):
        used = set()
        for stage in self.trees:
            for t in stage:
                used.update(int(f) for f in t.feature[t.feature >= 0])
        return used

    def decision_function(self, X, n_stages=None):
        """Raw class scores after the first ``n_stages`` stages (all by default)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise GbmError(f"expected {self.n_features} features, got shape {X.shape}")
        stages = self.n_stages if n_stages is None else min(int(n_stages), self.n_stages)
        scores = np.tile(self.base_scores, (X.shape[0], 1))
        if stages == 0:
            return scores
        if stages == self.n_stages:
            if self._flat is None:
                self._flat = _flatten([t for stage in self.trees for t in stage])
            flat = self._flat
        else:
            flat = _flatten([t for stage in self.trees[:stages] for t in stage])
        feature, threshold, left, right, value, roots = flat
        tree_class = np.tile(np.arange(len(self.classes), dtype=np.int64), stages)
        return _kernels.predict_forest(X, feature, threshold, left, right, value, roots,
                                       tree_class, self.config.learning_rate, scores)

    def predict_proba(self, X, n_stages=None):
        return softmax(self.decision_function(X, n_stages))

    def predict(self, X, n_stages=None):
        """Return ``(labels, probabilities)``."""
        proba = self.predict_proba(X, n_stages)
        return labels_from_proba(proba), proba

    # -- persistence --------------------------------------------------------

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": asdict(self.config),
            "classes": list(self.classes),
            "n_features": self.n_features,
            "base_scores": self.base_scores.tolist(),
            "trees": [[t.as_dict() for t in stage] for stage in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise GbmError(f"unsupported model file (format={d.get('format')}, version={d.get('version')})")
        return cls(
            GbmConfig(**d["config"]),
            np.asarray(d["base_scores"], dtype=np.float64),
            [[Tree.from_dict(t) for t in stage] for stage in d["trees"]],
            int(d["n_features"]),
            tuple(d["classes"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def labels_from_proba(proba):
    pick = np.argmax(proba[:, _TIE_ORDER], axis=1)
    return CLASSES[_TIE_ORDER[pick]]


def predict(model, X, n_stages=None):
    return model.predict(X, n_stages)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def bin_features(X, max_bins=64):
    """Quantise each column; returns ``(bins uint8, per-feature split thresholds)``.

    ``x <= thresholds[f][b]`` holds exactly when ``bins[:, f] <= b``.
    """
    n, p = X.shape
    Xb = np.empty((n, p), dtype=np.uint8)
    thresholds = []
    for j in range(p):
        col = X[:, j]
        uniq = np.unique(col)
        if uniq.size <= max_bins:
            thr = (uniq[:-1] + uniq[1:]) / 2.0
        else:
            qs = np.quantile(col, np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
            thr = np.unique(qs)
            thr = thr[thr < uniq[-1]]
        thresholds.append(thr)
        Xb[:, j] = np.searchsorted(thr, col, side="left")
    return Xb, thresholds


def _newton_leaf(r, h, n_classes):
    den = h.sum()
    if abs(den) < 1e-150:
        return 0.0
    return (n_classes - 1) / n_classes * r.sum() / den


def build_tree(Xb, thresholds, resid, hess, rows, max_depth, min_samples_leaf, n_bins, n_classes=3):
    """Grow one squared-error regression tree on ``resid[rows]`` (depth-first)."""
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        split = (-1, -1, 0.0)
        if depth < max_depth and idx.size >= 2 * min_samples_leaf:
            split = _kernels.best_split(Xb, idx, resid, n_bins, min_samples_leaf)
        f, b, _ = split
        if f < 0:
            value[node] = _newton_leaf(resid[idx], hess[idx], n_classes)
            continue
        go_left = Xb[idx, f] <= b
        li, ri = new_node(), new_node()
        feature[node] = f
        threshold[node] = float(thresholds[f][b])
        left[node], right[node] = li, ri
        # right pushed first so the left subtree is numbered first
        stack.append((ri, idx[~go_left], depth + 1))
        stack.append((li, idx[go_left], depth + 1))
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )


def base_scores_for(y):
    counts = np.array([(y == c).sum() for c in CLASSES], dtype=np.float64)
    return np.log(np.maximum(counts / counts.sum(), _PRIOR_FLOOR))


def fit_xy(X, y, config=GbmConfig(), callback=None):
    """Train on arrays; ``callback(stage, scores)`` sees training scores after each stage."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise GbmError("training data is empty")
    if X.shape[0] != y.size:
        raise GbmError("X and y differ in length")
    if not np.isfinite(X).all():
        raise GbmError("non-finite feature values")
    if not np.isin(y, CLASSES).all():
        raise GbmError("labels must lie in {-1, 0, +1}")
    if np.unique(y).size < 2:
        raise GbmError("training data contains a single class")

    n = X.shape[0]
    K = CLASSES.size
    Xb, thresholds = bin_features(X, config.max_bins)
    n_bins = max(2, max((t.size + 1 for t in thresholds), default=2))
    Y = one_hot(y)
    base = base_scores_for(y)
    scores = np.tile(base, (n, 1))
    rng = np.random.default_rng(config.seed)
    n_sub = max(1, int(round(config.subsample * n)))
    all_rows = np.arange(n, dtype=np.int64)
    class_ids = np.arange(K, dtype=np.int64)
    trees = []
    for stage in range(config.n_stages):
        P = softmax(scores)
        R = Y - P
        H = P * (1.0 - P)
        rows = all_rows if n_sub == n else np.sort(rng.choice(n, size=n_sub, replace=False)).astype(np.int64)
        stage_trees = [
            build_tree(Xb, thresholds, np.ascontiguousarray(R[:, k]), np.ascontiguousarray(H[:, k]), rows,
                       config.max_depth, config.min_samples_leaf, n_bins, K)
            for k in range(K)
        ]
        feature, threshold, left, right, value, roots = _flatten(stage_trees)
        _kernels.predict_forest(X, feature, threshold, left, right, value, roots, class_ids,
                                config.learning_rate, scores)
        trees.append(stage_trees)
        if callback is not None:
            callback(stage, scores)
    return GbmModel(config, base, trees, X.shape[1])


def fit(train, config=GbmConfig(), callback=None):
    """Train on a :class:`~fearlab.dataset.LabeledDataset`."""
    return fit_xy(train.X, train.y, config, callback)


def accuracy(model, X, y):
    labels, _ = model.predict(X)
    return float(np.mean(labels == np.asarray(y)))


# ---------------------------------------------------------------------------
# cross-validation and search
# ---------------------------------------------------------------------------


@dataclass
class CVResult:
    accuracies: list
    degenerate_folds: list

    @property
    def mean(self):
        return float(np.mean(self.accuracies))

    @property
    def std(self):
        return float(np.std(self.accuracies))


def fold_indices(n, folds):
    return np.array_split(np.arange(n), folds)


def cross_validate(ds, config=GbmConfig(), folds=5):
    """Contiguous chronological k-fold accuracy; single-class training folds fall back to a constant predictor."""
    n = len(ds)
    if folds < 2 or n < folds:
        raise GbmError("need folds >= 2 and at least one sample per fold")
    accs, degenerate = [], []
    for i, test_idx in enumerate(fold_indices(n, folds)):
        train_idx = np.setdiff1d(np.arange(n), test_idx, assume_unique=True)
        ytr = ds.y[train_idx]
        classes = np.unique(ytr)
        if classes.size < 2:
            degenerate.append(i)
            log.warning("fold %d: single-class training data, using a constant predictor", i)
            accs.append(float(np.mean(ds.y[test_idx] == classes[0])))
            continue
        model = fit_xy(ds.X[train_idx], ytr, config)
        accs.append(accuracy(model, ds.X[test_idx], ds.y[test_idx]))
    return CVResult(accs, degenerate)


@dataclass(frozen=True)
class Range:
    low: float
    high: float
    log: bool = False
    integer: bool = False

    def sample(self, rng):
        if self.integer:
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.log:
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))

    def clip(self, v):
        v = min(max(v, self.low), self.high)
        return int(round(v)) if self.integer else float(v)


DEFAULT_SPACE = {
    "learning_rate": Range(0.01, 0.3, log=True),
    "n_stages": Range(50, 500, integer=True),
    "max_depth": Range(2, 6, integer=True),
}


@dataclass
class Trial:
    trial: int
    params: dict
    mean: float
    std: float
    folds: list


@dataclass
class SearchResult:
    best_config: GbmConfig
    best_score: float
    trials: list

    def rows(self):
        keys = sorted({k for t in self.trials for k in t.params})
        yield ["trial", *keys, "mean_cv_accuracy"]
        for t in self.trials:
            yield [t.trial, *(t.params[k] for k in keys), t.mean]


def _sample(space, rng):
    params = {}
    for name in sorted(space):
        spec = space[name]
        if isinstance(spec, Range):
            params[name] = spec.sample(rng)
        else:
            choices = list(spec)
            params[name] = choices[int(rng.integers(len(choices)))]
    return params


def _evaluate(ds, base, params, folds, number):
    config = replace(base, **params)
    cv = cross_validate(ds, config, folds)
    return Trial(number, params, cv.mean, cv.std, cv.accuracies), config


def random_search(ds, space=None, trials=20, seed=0, base=GbmConfig(), folds=5):
    """Score ``trials`` configurations drawn from ``space`` by mean CV accuracy.

    ``space`` maps a config field to a :class:`Range` or a list of choices.
    The first trial with the highest score wins.
    """
    if trials < 1:
        raise GbmError("trials must be >= 1")
    space = DEFAULT_SPACE if space is None else space
    rng = np.random.default_rng(seed)
    log_, best = [], None
    for i in range(trials):
        trial, config = _evaluate(ds, base, _sample(space, rng), folds, i)
        log_.append(trial)
        if best is None or trial.mean > best[0]:
            best = (trial.mean, config)
    return SearchResult(best[1], best[0], log_)


def _parsimony_key(trial):
    p = trial.params
    return (-trial.mean, p.get("n_stages", 0), p.get("max_depth", 0), -p.get("learning_rate", 0.0))


def grid_search(ds, grid, base=GbmConfig(), folds=5):
    """Exhaustive search; ties prefer fewer stages, then shallower trees, then larger learning rate."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise GbmError("grid must be non-empty")
    names = sorted(grid)
    log_ = []
    for i, values in enumerate(itertools.product(*(grid[k] for k in names))):
        trial, _ = _evaluate(ds, base, dict(zip(names, values)), folds, i)
        log_.append(trial)
    winner = min(log_, key=_parsimony_key)
    return SearchResult(replace(base, **winner.params), winner.mean, log_)


def narrow_grid(best, space=None):
    """Three-point grid per searched field, centred on ``best`` and clipped to ``space``."""
    space = DEFAULT_SPACE if space is None else space
    grid = {}
    for name in sorted(space):
        centre = getattr(best, name)
        spec = space[name]
        if not isinstance(spec, Range):
            grid[name] = [centre]
            continue
        if name == "learning_rate":
            pts = [centre / 2, centre, centre * 2]
        elif name == "max_depth":
            pts = [centre - 1, centre, centre + 1]
        else:
            pts = [centre * 0.75, centre, centre * 1.25]
        vals = [spec.clip(v) for v in pts]
        if name != "learning_rate" and not spec.integer:
            vals = [float(v) for v in vals]
        vals[1] = centre
        grid[name] = sorted(set(vals))
    return grid


@dataclass
class TuneResult:
    best_config: GbmConfig
    best_score: float
    random: SearchResult
    grid: SearchResult


def tune(ds, space=None, trials=20, seed=0, base=GbmConfig(), folds=5):
    """Random search, then a grid search over a range narrowed around its winner."""
    rnd = random_search(ds, space, trials, seed, base, folds)
    grd = grid_search(ds, narrow_grid(rnd.best_config, space), base, folds)
    best = grd if grd.best_score >= rnd.best_score else rnd
    return TuneResult(best.best_config, best.best_score, rnd, grd)
