"""File-backed pipeline stages.

Every stage reads its upstream artifacts from ``<output_dir>/<upstream>/``
and writes ``<output_dir>/<stage>/`` including a ``manifest.json`` with the
config hash, seed, stage version and content digests.  Nothing time- or
host-dependent is written, so identical runs produce identical bytes.
"""

import csv
import hashlib
import json
import logging
import shutil
from dataclasses import asdict

import numpy as np

from . import gbm, market_data, signals
from .dataset import chrono_split, load_dataset, save_dataset, windowize
from .experiments import confusion_matrix, train_model, window_sweep
from .importance import NON_FINANCIAL, permutation_importance
from .labeling import DirectionSeries, label_series
from .series import format_time, parse_times, read_series_csv, resample_to_grid, to_float, write_series_csv
from .volindex import compute_vxbt_series

log = logging.getLogger(__name__)

STAGES = ("ingest", "index", "signals", "label", "dataset", "train", "importance", "sweep")
STAGE_VERSIONS = {s: 1 for s in STAGES}
UPSTREAM = {
    "ingest": (),
    "index": ("ingest",),
    "signals": ("ingest", "index"),
    "label": ("signals",),
    "dataset": ("label",),
    "train": ("dataset",),
    "importance": ("train", "dataset"),
    "sweep": ("label", "train"),
}
SERIES_ORDER = ("vxbt", "index", "tweet_volume", "tweet_sentiment", "trends")


class MissingArtifact(RuntimeError):
    def __init__(self, stage, needed):
        super().__init__(f"stage {stage!r} needs the {needed!r} artifacts; run `fearlab {needed}` first")
        self.stage = stage
        self.needed = needed


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _stage_dir(cfg, stage):
    return cfg.output_dir / stage


def _require(cfg, stage):
    for up in UPSTREAM[stage]:
        if not (_stage_dir(cfg, up) / "manifest.json").exists():
            raise MissingArtifact(stage, up)


def _begin(cfg, stage):
    _require(cfg, stage)
    d = _stage_dir(cfg, stage)
    if d.exists():
        shutil.rmtree(d)
    d.mkdir(parents=True)
    return d


def _finish(cfg, stage, directory):
    inputs = {}
    for up in UPSTREAM[stage]:
        inputs[up] = _digest(_stage_dir(cfg, up) / "manifest.json")
    outputs = {p.name: _digest(p) for p in sorted(directory.iterdir()) if p.name != "manifest.json"}
    _dump_json({
        "stage": stage,
        "stage_version": STAGE_VERSIONS[stage],
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "inputs": inputs,
        "outputs": outputs,
    }, directory / "manifest.json")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def run_ingest(cfg):
    d = _begin(cfg, "ingest")
    quotes = market_data.parse_quotes(cfg.input_path("quotes"))
    tweets = market_data.parse_tweets(cfg.input_path("tweets"))
    trends = market_data.parse_trends(cfg.input_path("trends"))
    market_data.write_quotes(quotes, d / "quotes.csv")
    market_data.write_tweets(tweets, d / "tweets.jsonl")
    market_data.write_trends(trends, d / "trends.csv")
    report = {"quotes": quotes.report.as_dict(), "tweets": tweets.report.as_dict(),
              "trends": trends.report.as_dict()}
    idx_path = cfg.input_path("index_price")
    if idx_path is not None:
        series = _read_index_price(idx_path, cfg.grid)
        write_series_csv(series, d / "index_price.csv")
        report["index_price"] = {"path": str(idx_path), "points": len(series), "gaps": series.gaps}
    for rep in report.values():
        rep["path"] = rep["path"].rsplit("/", 1)[-1]
    _dump_json(report, d / "ingest_report.json")
    _finish(cfg, "ingest", d)


def _read_index_price(path, grid):
    import pandas as pd

    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns) != ["timestamp", "value"]:
        raise market_data.MarketDataError(f"{path}: expected header 'timestamp,value'")
    times = parse_times(df["timestamp"])
    vals = to_float(df["value"])
    if np.isnat(times).any():
        raise market_data.MarketDataError(f"{path}: unparseable timestamp")
    return resample_to_grid(times, vals, grid, "index")


def run_index(cfg):
    d = _begin(cfg, "index")
    quotes = market_data.parse_quotes(_stage_dir(cfg, "ingest") / "quotes.csv")
    result = compute_vxbt_series(quotes, cfg.grid, cfg.index)
    write_series_csv(result.series, d / "vxbt.csv", "vxbt")
    write_series_csv(result.forward, d / "forward.csv", "forward")
    _dump_json(result.report.as_dict(), d / "vxbt_report.json")
    _finish(cfg, "index", d)


def run_signals(cfg):
    d = _begin(cfg, "signals")
    ing = _stage_dir(cfg, "ingest")
    tweets = market_data.parse_tweets(ing / "tweets.jsonl")
    trends = market_data.parse_trends(ing / "trends.csv")
    lex_path = cfg.input_path("lexicon")
    lexicon = (signals.Lexicon.load(lex_path, cfg.lexicon_alpha) if lex_path
               else signals.Lexicon({}, cfg.lexicon_alpha))
    volume, sentiment = signals.aggregate_tweets(tweets, lexicon, cfg.grid)
    volume = signals.ewma(volume, cfg.ewma_span)
    sentiment = signals.ewma(sentiment, cfg.ewma_span)
    trend_series = signals.upsample_linear(trends, cfg.grid)
    if (ing / "index_price.csv").exists():
        index = read_series_csv(ing / "index_price.csv", "index")
    else:
        index = read_series_csv(_stage_dir(cfg, "index") / "forward.csv", "index")
    vxbt = read_series_csv(_stage_dir(cfg, "index") / "vxbt.csv", "vxbt")
    series = {"vxbt": vxbt, "index": index, "tweet_volume": volume,
              "tweet_sentiment": sentiment, "trends": trend_series}
    for name in SERIES_ORDER:
        write_series_csv(series[name], d / f"{name}.csv")
    _finish(cfg, "signals", d)


def _label_fit_stop(cfg, n):
    return None if cfg.label_mode == "strict-paper" else int(np.floor(cfg.train_fraction * n))


def run_label(cfg):
    d = _begin(cfg, "label")
    fits = []
    for name in SERIES_ORDER:
        raw = read_series_csv(_stage_dir(cfg, "signals") / f"{name}.csv", name)
        directions, fit, norm = label_series(raw, _label_fit_stop(cfg, len(raw)))
        write_series_csv(norm, d / f"{name}_normalized.csv")
        with open(d / f"{name}_labels.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "label"])
            for t, v in zip(directions.timestamps, directions.labels.tolist()):
                w.writerow([format_time(t), v])
        fits.append(fit.as_dict(name))
    _dump_json({"mode": cfg.label_mode, "fits": fits}, d / "thresholds.json")
    _finish(cfg, "label", d)


def load_directions(cfg):
    out = {}
    for name in SERIES_ORDER:
        path = _stage_dir(cfg, "label") / f"{name}_labels.csv"
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        times = parse_times([r[0] for r in rows])
        labels = np.array([int(r[1]) for r in rows], dtype=np.int8)
        interval = times[1] - times[0] if times.size > 1 else cfg.grid.interval
        out[name] = DirectionSeries(times[0], interval, labels, name)
    return out


def run_dataset(cfg):
    d = _begin(cfg, "dataset")
    ds = windowize(load_directions(cfg), cfg.window, cfg.horizon)
    train, _ = chrono_split(ds, cfg.train_fraction)
    save_dataset(ds, d, split_index=len(train),
                 extra={"window": cfg.window, "horizon": cfg.horizon, "train_fraction": cfg.train_fraction})
    _finish(cfg, "dataset", d)


def _split_loaded(cfg):
    ds, manifest = load_dataset(_stage_dir(cfg, "dataset"))
    cut = manifest["split_index"]
    return ds.subset(slice(0, cut)), ds.subset(slice(cut, None))


def _write_search_log(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in result.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def run_train(cfg):
    d = _begin(cfg, "train")
    train, test = _split_loaded(cfg)
    model, tuned = train_model(train, cfg.headline())
    model.save(d / "model.json")
    if tuned is not None:
        _write_search_log(tuned.random, d / "random_search.csv")
        _write_search_log(tuned.grid, d / "grid_search.csv")
    labels, _ = model.predict(test.X)
    cm = confusion_matrix(test.y, labels)
    metrics = {
        "accuracy": float(np.mean(labels == test.y)),
        "confusion_matrix": cm.tolist(),
        "classes": [-1, 0, 1],
        "test_class_counts": cm.sum(axis=1).tolist(),
        "train_size": len(train),
        "test_size": len(test),
        "model_config": asdict(model.config),
        "cv_score": None if tuned is None else tuned.best_score,
    }
    _dump_json(metrics, d / "metrics.json")
    _finish(cfg, "train", d)


def run_importance(cfg):
    d = _begin(cfg, "importance")
    _, test = _split_loaded(cfg)
    model = gbm.GbmModel.load(_stage_dir(cfg, "train") / "model.json")
    report = permutation_importance(model, test, cfg.importance_repeats, cfg.seed)
    report.write_csv(d / "importance.csv")
    report.write_csv(d / "importance_top.csv", report.top(cfg.top_k))
    report.write_csv(d / "importance_top_non_financial.csv", report.top(cfg.top_k, NON_FINANCIAL))
    _dump_json({"baseline_accuracy": report.baseline_accuracy, "repeats": cfg.importance_repeats},
               d / "importance.json")
    _finish(cfg, "importance", d)


def run_sweep(cfg):
    d = _begin(cfg, "sweep")
    model = gbm.GbmModel.load(_stage_dir(cfg, "train") / "model.json")
    result = window_sweep(load_directions(cfg), cfg.headline(), cfg.sweep_windows,
                          model_config=model.config, folds=cfg.sweep_folds)
    result.write_csv(d / "sweep.csv")
    _finish(cfg, "sweep", d)


RUNNERS = {
    "ingest": run_ingest,
    "index": run_index,
    "signals": run_signals,
    "label": run_label,
    "dataset": run_dataset,
    "train": run_train,
    "importance": run_importance,
    "sweep": run_sweep,
}


def run_stage(cfg, stage):
    if stage == "all":
        for s in STAGES:
            log.info("stage %s", s)
            RUNNERS[s](cfg)
        return
    RUNNERS[stage](cfg)
