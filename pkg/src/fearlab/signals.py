"""Tweet volume/sentiment and search-trends series on the common grid."""

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .series import UniformSeries

_TOKEN = re.compile(r"[a-z0-9']+")


@dataclass
class Lexicon:
    """Word valences in [-4, 4] and the compound normalisation constant."""

    entries: dict = field(default_factory=dict)
    alpha: float = 15.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        for word, score in self.entries.items():
            if not -4.0 <= score <= 4.0:
                raise ValueError(f"valence for {word!r} outside [-4, 4]: {score}")
        self.entries = {w.lower(): float(s) for w, s in self.entries.items()}

    @classmethod
    def load(cls, path, alpha=15.0):
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) < 2:
                    raise ValueError(f"{path}:{lineno}: expected 'word<TAB>valence'")
                entries[parts[0].strip()] = float(parts[1])
        return cls(entries, alpha)

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for word in sorted(self.entries):
                fh.write(f"{word}\t{self.entries[word]!r}\n")


def compound_score(text, lexicon):
    """Normalised valence sum ``s / sqrt(s^2 + alpha)``; 0 when nothing matches."""
    s = 0.0
    for tok in _TOKEN.findall(text.lower()):
        s += lexicon.entries.get(tok, 0.0)
    if s == 0.0:
        return 0.0
    return s / math.sqrt(s * s + lexicon.alpha)


def tweet_compound(tweet, lexicon):
    """Pre-computed compound from the input file wins over the lexicon scorer."""
    if tweet.compound is not None:
        return float(tweet.compound)
    return compound_score(tweet.text, lexicon)


def aggregate_tweets(tweets, lexicon, grid, scorer=tweet_compound):
    """Per-bucket tweet counts and mean compound sentiment.

    Bucket ``k`` covers ``[start + k*interval, start + (k+1)*interval)``.
    Tweets outside the grid are ignored; empty buckets have volume 0 and a
    sentiment gap.
    """
    n = len(grid)
    step = grid.interval.astype(np.int64)
    if len(tweets) == 0:
        return (UniformSeries.on_grid(grid, np.zeros(n), "tweet_volume"),
                UniformSeries.on_grid(grid, np.full(n, np.nan), "tweet_sentiment"))
    ts = np.array([t.timestamp for t in tweets], dtype="datetime64[s]")
    scores = np.array([scorer(t, lexicon) for t in tweets], dtype=np.float64)
    k = (ts - grid.start).astype(np.int64) // step
    inside = (k >= 0) & (k < n) & (ts < grid.end)
    k = k[inside]
    volume = np.bincount(k, minlength=n).astype(np.float64)
    total = np.bincount(k, weights=scores[inside], minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        sentiment = np.where(volume > 0, total / volume, np.nan)
    return (UniformSeries.on_grid(grid, volume, "tweet_volume"),
            UniformSeries.on_grid(grid, sentiment, "tweet_sentiment"))


def ewma(series, span=12):
    """Causal exponential smoothing with weight ``2 / (span + 1)`` on the newest value.

    The first observation seeds the average; gaps repeat the previous
    smoothed value (leading gaps stay gaps).
    """
    if span < 1:
        raise ValueError("span must be >= 1")
    alpha = 2.0 / (span + 1.0)
    return series.with_values(_kernels.ewma(series.values, alpha))


def upsample_linear(hourly, grid, name="trends"):
    """Linear interpolation of hourly knots onto the grid; gaps outside the knot range."""
    if len(hourly) < 2:
        raise ValueError("need at least two knots to interpolate")
    kt = np.array([r.timestamp for r in hourly], dtype="datetime64[s]").astype(np.int64)
    kv = np.array([r.value for r in hourly], dtype=np.float64)
    order = np.argsort(kt, kind="stable")
    kt, kv = kt[order], kv[order]
    gt = grid.times.astype(np.int64)
    out = np.interp(gt, kt, kv)
    out[(gt < kt[0]) | (gt > kt[-1])] = np.nan
    return UniformSeries.on_grid(grid, out, name)
