"""Acceptance criteria, one test per criterion, each emitting a PASS/FAIL line.

Tolerances are fixed here and never relaxed:

  1  flat-vol recovery          |VXBT - 100 sigma| <= 2 at >= 99% of points, < 10 s per 1-day stream
  2  interpolation identity     1000 triples, |VXBT - 100 sqrt(v)| <= 1e-9
  3  threshold balance          20 walks of 10^4, imbalance <= 2% N, theta == exhaustive argmin
  4  classifier competence      3000 blobs, tuned test accuracy >= 0.90, training < 60 s
  5  gradient correctness       stage-0 residual vs central difference, <= 1e-6
  6  importance recovery        planted feature first in >= 19 of 20 seeds; constant column drop == 0
  7  window-sweep shape         |acc(1) - 1/3| <= 0.05, acc(w) >= 0.9 for every w >= 4
  8  chance floor               |acc - 1/3| <= 0.03 for each of 10 seeds
  9  published-data run         |acc - 0.434| <= 0.03 and VXBT/index lag 1 in top 5 (only with the data)
  10 end-to-end smoke           10-day fixture `all` < 120 s, byte-identical across two runs
"""

import math
import os
import time

import numpy as np
import pytest

from fearlab import gbm
from fearlab.dataset import LabeledDataset, chrono_split, windowize
from fearlab.experiments import HeadlineConfig, SearchSpec, run_headline, window_sweep
from fearlab.gbm import GbmConfig, Range
from fearlab.importance import permutation_importance
from fearlab.labeling import EPS, fit_threshold
from fearlab.series import Grid, UniformSeries
from fearlab.synthetic import bs_quote_stream, gaussian_blobs, planted_directions, random_directions
from fearlab.volindex import VarianceContribution, compute_vxbt_series, interpolate_index

pytestmark = pytest.mark.acceptance


@pytest.mark.parametrize("sigma", [0.3, 0.6, 1.0])
def test_c1_flat_vol_recovery(acceptance, sigma):
    table, _, _ = bs_quote_stream("2019-05-06", "2019-05-07", sigma, seed=int(sigma * 10))
    t0 = time.perf_counter()
    res = compute_vxbt_series(table, Grid("2019-05-06", "2019-05-07"))
    elapsed = time.perf_counter() - t0
    err = np.abs(res.series.values - 100 * sigma)
    within = float(np.mean(err <= 2.0))  # gaps count as misses
    acceptance(1, f"flat-vol recovery sigma={sigma}", within >= 0.99 and elapsed < 10,
               f"{within:.2%} of {len(err)} points within 2 vol pts, max err {np.nanmax(err):.3f}, "
               f"{res.report.gaps} gaps, {elapsed:.2f} s")


def test_c2_interpolation_identity(acceptance):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        v = rng.uniform(1e-4, 4.0)
        n1 = rng.uniform(1.0, 10080.0)
        n2 = rng.uniform(10080.0, 60 * 1440)
        if not (n1 < 10080 < n2):
            continue
        got = interpolate_index(VarianceContribution(v, n1 / 525600, n1, 1.0, 1.0),
                                VarianceContribution(v, n2 / 525600, n2, 1.0, 1.0))
        worst = max(worst, abs(got - 100 * math.sqrt(v)))
    acceptance(2, "interpolation identity", worst <= 1e-9, f"max abs error {worst:.2e} over 1000 triples")


def _scan_oracle(values):
    v = np.asarray(values)
    c = (v[1:] - v[:-1]) / np.maximum(np.abs(v[:-1]), EPS)
    cands = np.unique(np.abs(c))
    best = None
    for lo in range(0, cands.size, 512):
        th = cands[lo:lo + 512, None]
        plus = (c[None, :] > th).sum(axis=1)
        minus = (c[None, :] < -th).sum(axis=1)
        zero = c.size - plus - minus
        counts = np.stack([minus, zero, plus], axis=1)
        imb = counts.max(axis=1) - counts.min(axis=1)
        k = int(np.argmin(imb))
        if best is None or imb[k] < best[1]:
            best = (float(cands[lo + k]), int(imb[k]))
    return best


def test_c3_threshold_balance(acceptance):
    worst, mismatches = 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        v = 1000.0 + np.cumsum(rng.normal(size=10_000))
        fit = fit_threshold(UniformSeries("2019-05-01", 300, v))
        theta, imb = _scan_oracle(v)
        mismatches += (fit.theta, fit.imbalance) != (theta, imb)
        worst = max(worst, fit.imbalance / len(v))
    acceptance(3, "threshold balance", worst <= 0.02 and mismatches == 0,
               f"worst imbalance {worst:.3%} of N, {mismatches} disagreements with exhaustive scan")


def test_c4_classifier_competence(acceptance):
    X, y = gaussian_blobs(3000, seed=4)
    names = [("x", j) for j in range(X.shape[1])]
    stamps = np.datetime64("2019-05-01", "s") + np.arange(3000) * np.timedelta64(300, "s")
    train, test = chrono_split(LabeledDataset(names, X, y, stamps), 0.9)
    space = {"learning_rate": Range(0.01, 0.3, log=True), "n_stages": Range(50, 150, integer=True),
             "max_depth": Range(2, 4, integer=True)}
    t0 = time.perf_counter()
    tuned = gbm.tune(train, space, trials=6, seed=4, folds=5)
    model = gbm.fit(train, tuned.best_config)
    elapsed = time.perf_counter() - t0
    acc = gbm.accuracy(model, test.X, test.y)
    acceptance(4, "classifier competence", acc >= 0.90 and elapsed < 60,
               f"test accuracy {acc:.4f}, tuning+training {elapsed:.1f} s, config {tuned.best_config}")


def test_c5_gradient_correctness(acceptance):
    X, y = gaussian_blobs(500, seed=5)
    scores = np.tile(gbm.base_scores_for(y), (y.size, 1))
    r = gbm.residuals(y, scores)
    h, worst = 1e-6, 0.0
    for i in range(y.size):
        for k in range(3):
            up, down = scores[i:i + 1].copy(), scores[i:i + 1].copy()
            up[0, k] += h
            down[0, k] -= h
            g = (gbm.cross_entropy(y[i:i + 1], up) - gbm.cross_entropy(y[i:i + 1], down)) / (2 * h)
            worst = max(worst, abs(-g - r[i, k]))
    acceptance(5, "gradient correctness", worst <= 1e-6, f"max |residual + dL/ds| = {worst:.2e}")


def test_c6_importance_recovery(acceptance):
    first, constant_drops = 0, []
    for seed in range(20):
        ds = windowize(planted_directions(2000, lag=3, seed=100 + seed), 24, 1)
        train, test = chrono_split(ds, 0.9)
        model = gbm.fit(train, GbmConfig(n_stages=30, max_depth=2, seed=seed))
        rep = permutation_importance(model, test, repeats=3, seed=seed)
        first += rep.ranked()[0].feature == ("trends", 3)
        X = test.X.copy()
        j = test.feature_names.index(("trends", 3))
        X[:, j] = 1.0
        const = LabeledDataset(test.feature_names, X, test.y, test.timestamps)
        constant_drops.append(permutation_importance(model, const, repeats=3, seed=seed).entries[j].mean_drop)
    ok = first >= 19 and all(d == 0.0 for d in constant_drops)
    acceptance(6, "importance recovery", ok,
               f"planted feature first in {first}/20 runs, constant-column drops {set(constant_drops)}")


def test_c7_window_sweep_shape(acceptance):
    windows = [1, 2, 4, 6, 8, 12, 24, 48]
    res = window_sweep(planted_directions(3000, lag=3, seed=7), HeadlineConfig(model=GbmConfig(n_stages=30, max_depth=2)),
                       windows, folds=5)
    acc = {r.window: r.mean_cv_accuracy for r in res.rows}
    ok = abs(acc[1] - 1 / 3) <= 0.05 and all(acc[w] >= 0.9 for w in windows if w >= 4)
    acceptance(7, "window-sweep shape", ok, ", ".join(f"w={w}: {a:.3f}" for w, a in acc.items()))


def test_c8_chance_floor(acceptance):
    cfg = dict(importance_repeats=1, search=SearchSpec(
        trials=2, folds=3, space={"n_stages": [20, 40], "max_depth": [1, 2], "learning_rate": [0.1]}))
    accs = []
    for seed in range(10):
        res = run_headline(random_directions(40_000, seed=200 + seed), HeadlineConfig(seed=seed, **cfg))
        accs.append(res.accuracy)
    worst = max(abs(a - 1 / 3) for a in accs)
    acceptance(8, "chance floor", worst <= 0.03,
               f"accuracies {', '.join(f'{a:.3f}' for a in accs)}; worst deviation {worst:.3f}")


def test_c9_published_dataset(acceptance, tmp_path):
    cfg_path = os.environ.get("FEARLAB_PUBLISHED_CONFIG")
    if not cfg_path:
        acceptance.skip(9, "published-data reproduction",
                        "needs the published dataset; set FEARLAB_PUBLISHED_CONFIG to its run config")
    import csv
    import json

    from fearlab.config import load_config
    from fearlab.pipeline import run_stage

    cfg = load_config(cfg_path, out=tmp_path / "out")
    run_stage(cfg, "all")
    metrics = json.loads((cfg.output_dir / "train" / "metrics.json").read_text())
    with open(cfg.output_dir / "importance" / "importance.csv", newline="") as fh:
        top5 = [(r["feature"], int(r["lag"])) for r in list(csv.DictReader(fh))[:5]]
    acc = metrics["accuracy"]
    ok = abs(acc - 0.434) <= 0.03 and ("vxbt", 1) in top5 and ("index", 1) in top5
    acceptance(9, "published-data reproduction", ok, f"test accuracy {acc:.4f}, top-5 {top5}")


def test_c10_end_to_end(acceptance, tmp_path):
    from fearlab.cli import main
    from fearlab.fixture import write_fixture

    cfg = write_fixture(tmp_path / "fixture", days=10, seed=7)
    times, snaps = [], []
    for run in ("a", "b"):
        out = tmp_path / run
        t0 = time.perf_counter()
        code = main(["all", "--config", str(cfg), "--out", str(out)])
        times.append(time.perf_counter() - t0)
        assert code == 0
        snaps.append({p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    identical = snaps[0] == snaps[1]
    ok = identical and max(times) < 120
    acceptance(10, "end-to-end smoke and determinism", ok,
               f"runs took {times[0]:.1f} s / {times[1]:.1f} s, {len(snaps[0])} artifacts, "
               f"byte-identical={identical}")
