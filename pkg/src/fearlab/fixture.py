"""Write the synthetic end-to-end input set (``fearlab fixture``)."""

import csv
from pathlib import Path

import yaml

from .market_data import write_quotes, write_trends, write_tweets
from .series import format_time
from .signals import Lexicon
from .synthetic import fixture_inputs


def fixture_config(days, seed, start="2019-05-01T00:00:00Z"):
    end_day = 1 + days
    return {
        "seed": seed,
        "output_dir": "out",
        "inputs": {
            "quotes": "quotes.csv",
            "tweets": "tweets.jsonl",
            "trends": "trends.csv",
            "index_price": "index_price.csv",
            "lexicon": "lexicon.tsv",
        },
        "grid": {"start": start, "end": f"2019-05-{end_day:02d}T00:00:00Z", "interval_minutes": 5},
        "index": {"risk_free_rate": 0.0, "target_maturity_minutes": 10080, "staleness_minutes": 60},
        "signals": {"ewma_span": 12},
        "labeling": {"mode": "leak-safe"},
        "dataset": {"window": 24, "horizon": 1, "train_fraction": 0.9},
        "model": {"learning_rate": 0.1, "n_stages": 30, "max_depth": 2},
        "search": {
            "trials": 3,
            "folds": 3,
            "space": {
                "learning_rate": {"low": 0.05, "high": 0.3, "log": True},
                "n_stages": {"low": 10, "high": 30},
                "max_depth": {"low": 1, "high": 2},
            },
        },
        "importance": {"repeats": 3, "top_k": 20},
        "sweep": {"windows": [1, 3, 6, 12, 24], "folds": 3},
    }


def write_fixture(out, days=10, seed=7):
    """Generate inputs plus ``config.yaml`` under ``out``; returns the config path."""
    if not 1 <= days <= 28:
        raise ValueError("fixture supports 1 to 28 days (May 2019)")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = fixture_inputs(days=days, seed=seed)
    write_quotes(data["quotes"], out / "quotes.csv")
    write_tweets(data["tweets"], out / "tweets.jsonl")
    write_trends(data["trends"], out / "trends.csv")
    times, values = data["index"]
    with open(out / "index_price.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "value"])
        for t, v in zip(times, values.tolist()):
            w.writerow([format_time(t), repr(v)])
    Lexicon(data["lexicon"]).dump(out / "lexicon.tsv")
    path = out / "config.yaml"
    path.write_text(yaml.safe_dump(fixture_config(days, seed), sort_keys=True))
    return path
