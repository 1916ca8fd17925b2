"""Readers and writers for the recorded input files.

Three inputs are supported: option quotes (CSV or JSONL), tweets (JSONL) and
hourly search-trends values (CSV).  Every row is either accepted or counted
as a rejection in the attached :class:`ParseReport`; nothing is dropped
silently.
"""

import csv
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .series import format_time, parse_times, to_datetime64, to_float

log = logging.getLogger(__name__)

QUOTE_COLUMNS = ("timestamp", "expiry", "strike", "side", "bid", "ask")
TRENDS_COLUMNS = ("timestamp", "value")
MAX_MALFORMED_FRACTION = 0.10

_RT_TOKEN = re.compile(r"(?<![A-Za-z0-9_])RT(?![A-Za-z0-9_])")


class MarketDataError(ValueError):
    """Input file is unreadable, has the wrong schema, or is mostly garbage."""


@dataclass
class ParseReport:
    path: str
    rows: int = 0
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    gaps: list = field(default_factory=list)
    filtered: int = 0  # valid rows removed by a content rule (retweets)

    @property
    def malformed(self):
        return sum(self.rejected.values())

    def as_dict(self):
        return {
            "path": self.path,
            "rows": self.rows,
            "accepted": self.accepted,
            "malformed": self.malformed,
            "rejected": dict(sorted(self.rejected.items())),
            "filtered": self.filtered,
            "gaps": [[format_time(a), format_time(b)] for a, b in self.gaps],
        }

    def _check_fraction(self):
        if self.rows and self.malformed / self.rows > MAX_MALFORMED_FRACTION:
            raise MarketDataError(
                f"{self.path}: {self.malformed} of {self.rows} rows malformed "
                f"({dict(self.rejected)}); refusing to continue"
            )


@dataclass(frozen=True)
class OptionQuoteRecord:
    timestamp: np.datetime64
    expiry: np.datetime64
    strike: float
    side: str  # "C" or "P"
    bid: float
    ask: float


@dataclass(frozen=True)
class TweetRecord:
    timestamp: np.datetime64
    text: str
    is_retweet: bool = False
    compound: float | None = None


@dataclass(frozen=True)
class TrendsRecord:
    timestamp: np.datetime64
    value: float


class QuoteTable:
    """Columnar quote store; behaves as a sequence of :class:`OptionQuoteRecord`."""

    def __init__(self, timestamp, expiry, strike, is_call, bid, ask, report=None):
        self.timestamp = np.asarray(timestamp, dtype="datetime64[s]")
        self.expiry = np.asarray(expiry, dtype="datetime64[s]")
        self.strike = np.asarray(strike, dtype=np.float64)
        self.is_call = np.asarray(is_call, dtype=bool)
        self.bid = np.asarray(bid, dtype=np.float64)
        self.ask = np.asarray(ask, dtype=np.float64)
        n = self.timestamp.size
        for col in (self.expiry, self.strike, self.is_call, self.bid, self.ask):
            if col.size != n:
                raise ValueError("quote columns differ in length")
        self.report = report

    @classmethod
    def from_records(cls, records):
        records = list(records)
        return cls(
            [r.timestamp for r in records],
            [r.expiry for r in records],
            [r.strike for r in records],
            [r.side == "C" for r in records],
            [r.bid for r in records],
            [r.ask for r in records],
        )

    def __len__(self):
        return self.timestamp.size

    def __getitem__(self, i):
        return OptionQuoteRecord(
            self.timestamp[i], self.expiry[i], float(self.strike[i]),
            "C" if self.is_call[i] else "P", float(self.bid[i]), float(self.ask[i]),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def take(self, index):
        return QuoteTable(
            self.timestamp[index], self.expiry[index], self.strike[index],
            self.is_call[index], self.bid[index], self.ask[index], self.report,
        )

    def sorted(self):
        return self.take(np.argsort(self.timestamp, kind="stable"))


class RecordList(list):
    """A list of parsed records carrying its :class:`ParseReport`."""

    def __init__(self, items=(), report=None):
        super().__init__(items)
        self.report = report


# ---------------------------------------------------------------------------
# quotes
# ---------------------------------------------------------------------------


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "jsonl"):
            raise MarketDataError(f"unknown quote format {fmt!r}")
        return fmt
    suffixes = Path(path).suffixes
    return "jsonl" if ".jsonl" in suffixes or ".json" in suffixes else "csv"


def _read_frame(path, fmt):
    try:
        if fmt == "csv":
            return pd.read_csv(path, dtype=str, keep_default_na=False)
        return pd.read_json(path, lines=True, dtype=False, convert_dates=False, precise_float=True)
    except (OSError, ValueError) as exc:
        raise MarketDataError(f"cannot read {path}: {exc}") from exc


def parse_quotes(path, format=None):
    """Parse an option quote file into a timestamp-sorted :class:`QuoteTable`."""
    fmt = _infer_format(path, format)
    if not Path(path).exists():
        raise MarketDataError(f"cannot read {path}: no such file")
    df = _read_frame(path, fmt)
    if tuple(df.columns) != QUOTE_COLUMNS and not (df.empty and fmt == "jsonl"):
        raise MarketDataError(
            f"{path}: unknown quote schema {list(df.columns)}; expected {list(QUOTE_COLUMNS)}"
        )
    report = ParseReport(str(path), rows=len(df))
    if df.empty:
        return QuoteTable([], [], [], [], [], [], report)

    ts = parse_times(df["timestamp"].astype(str))
    ex = parse_times(df["expiry"].astype(str))
    num = {c: to_float(df[c]) for c in ("strike", "bid", "ask")}
    side = df["side"].astype(str).str.strip().str.upper().to_numpy()

    checks = [
        ("bad_timestamp", np.isnat(ts) | np.isnat(ex)),
        ("bad_number", ~(np.isfinite(num["strike"]) & np.isfinite(num["bid"]) & np.isfinite(num["ask"]))),
        ("bad_side", ~np.isin(side, ["C", "P"])),
        ("nonpositive_strike", ~(num["strike"] > 0)),
        ("negative_bid", ~(num["bid"] >= 0)),
        ("ask_below_bid", ~(num["ask"] >= num["bid"])),
        ("expired", ~(ex > ts)),
    ]
    bad = np.zeros(len(df), dtype=bool)
    for reason, mask in checks:
        fresh = mask & ~bad
        if fresh.any():
            report.rejected[reason] += int(fresh.sum())
        bad |= mask
    report.accepted = int((~bad).sum())
    report._check_fraction()
    if report.malformed:
        log.warning("%s: rejected %d of %d quote rows: %s", path, report.malformed, report.rows, dict(report.rejected))

    keep = ~bad
    table = QuoteTable(ts[keep], ex[keep], num["strike"][keep], side[keep] == "C",
                       num["bid"][keep], num["ask"][keep], report)
    out = table.sorted()
    out.report = report
    return out


def write_quotes(quotes, path, format=None):
    """Write quotes in the documented schema (inverse of :func:`parse_quotes`)."""
    table = quotes if isinstance(quotes, QuoteTable) else QuoteTable.from_records(quotes)
    fmt = _infer_format(path, format)
    ts = [format_time(t) for t in table.timestamp]
    ex = [format_time(t) for t in table.expiry]
    side = np.where(table.is_call, "C", "P")
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(QUOTE_COLUMNS)
            for row in zip(ts, ex, table.strike.tolist(), side.tolist(), table.bid.tolist(), table.ask.tolist()):
                w.writerow([row[0], row[1], repr(row[2]), row[3], repr(row[4]), repr(row[5])])
        else:
            for row in zip(ts, ex, table.strike.tolist(), side.tolist(), table.bid.tolist(), table.ask.tolist()):
                fh.write(json.dumps(dict(zip(QUOTE_COLUMNS, row))) + "\n")


# ---------------------------------------------------------------------------
# tweets
# ---------------------------------------------------------------------------


def is_retweet(record):
    return bool(record.is_retweet) or _RT_TOKEN.search(record.text) is not None


def filter_retweets(records):
    """Drop retweets: flagged by the source, or carrying a standalone ``RT`` token."""
    return [r for r in records if not is_retweet(r)]


def parse_tweets(path):
    """Parse tweet JSONL, discard retweets, return survivors sorted by time."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise MarketDataError(f"cannot read {path}: {exc}") from exc
    report = ParseReport(str(path))
    raw = []
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            report.rows += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                report.rejected["bad_json"] += 1
                continue
            if not isinstance(obj, dict) or "timestamp" not in obj:
                raise MarketDataError(f"{path}:{lineno}: missing timestamp field")
            try:
                ts = to_datetime64(obj["timestamp"])
            except (ValueError, TypeError):
                report.rejected["bad_timestamp"] += 1
                continue
            text = obj.get("text")
            if not isinstance(text, str) or not text.strip():
                report.rejected["empty_text"] += 1
                continue
            compound = obj.get("compound")
            if compound is not None:
                try:
                    compound = float(compound)
                except (TypeError, ValueError):
                    compound = np.nan
                if not -1.0 <= compound <= 1.0:
                    report.rejected["bad_compound"] += 1
                    continue
            raw.append(TweetRecord(ts, text, bool(obj.get("is_retweet", False)), compound))
    report._check_fraction()
    kept = filter_retweets(raw)
    report.accepted = len(kept)
    report.filtered = len(raw) - len(kept)
    kept.sort(key=lambda r: r.timestamp)
    return RecordList(kept, report)


def write_tweets(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {"timestamp": format_time(r.timestamp), "text": r.text, "is_retweet": bool(r.is_retweet)}
            if r.compound is not None:
                obj["compound"] = r.compound
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# trends
# ---------------------------------------------------------------------------


def parse_trends(path):
    """Parse hourly trends values; 100 is peak interest, 25 is a quarter of peak."""
    if not Path(path).exists():
        raise MarketDataError(f"cannot read {path}: no such file")
    df = _read_frame(path, "csv")
    if tuple(df.columns) != TRENDS_COLUMNS:
        raise MarketDataError(f"{path}: unknown trends schema {list(df.columns)}")
    report = ParseReport(str(path), rows=len(df))
    ts = parse_times(df["timestamp"])
    vals = to_float(df["value"])
    if np.isnat(ts).any() or not np.isfinite(vals).all():
        raise MarketDataError(f"{path}: unparseable timestamp or value")
    out_of_range = (vals < 0) | (vals > 100)
    if out_of_range.any():
        i = int(np.argmax(out_of_range))
        raise MarketDataError(f"{path}: trends value {vals[i]} at row {i + 1} outside [0, 100]")
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], vals[order]
    dup = np.diff(ts) == np.timedelta64(0, "s")
    if dup.any():
        raise MarketDataError(f"{path}: duplicate timestamp {format_time(ts[1:][dup][0])}")
    hour = np.timedelta64(3600, "s")
    steps = np.diff(ts)
    for j in np.flatnonzero(steps > hour):
        report.gaps.append((ts[j], ts[j + 1]))
    if report.gaps:
        log.warning("%s: %d gaps in hourly trends", path, len(report.gaps))
    report.accepted = len(ts)
    return RecordList([TrendsRecord(t, float(v)) for t, v in zip(ts, vals)], report)


def write_trends(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRENDS_COLUMNS)
        for r in records:
            w.writerow([format_time(r.timestamp), repr(float(r.value))])
