"""Seven-day implied volatility index (VXBT) from weekly option quotes.

Each expiry contributes a model-free variance built from out-of-the-money
option mids; the two Friday expiries bracketing the seven-day target are
blended linearly in total variance and annualised.  Risk-free rate defaults
to zero.  Times to expiry are carried both in minutes and in years
(minutes / 525600).
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .market_data import QuoteTable
from .series import UniformSeries, to_datetime64

log = logging.getLogger(__name__)

YEAR_MINUTES = 525600
WEEK = np.timedelta64(7 * 86400, "s")
# 1970-01-02 was a Friday; weekly options expire at 08:00 UTC.
_FRIDAY_0800 = np.datetime64("1970-01-02T08:00:00", "s")


class VolIndexError(ValueError):
    """A single index evaluation cannot be carried out."""


@dataclass(frozen=True)
class IndexParams:
    risk_free_rate: float = 0.0
    target_maturity_minutes: float = 7 * 1440
    year_minutes: float = YEAR_MINUTES
    min_quotes_per_expiry: int = 3
    staleness_minutes: float = 60.0
    zero_bid_truncation: bool = False
    # reproduce the printed blend (difference of the two weighted terms)
    eq2_minus: bool = False

    def __post_init__(self):
        if not self.target_maturity_minutes > 0:
            raise ValueError("target maturity must be positive")
        if self.year_minutes != YEAR_MINUTES:
            raise ValueError("year_minutes is fixed at 525600")
        if self.min_quotes_per_expiry < 2:
            raise ValueError("min_quotes_per_expiry must be at least 2")
        if self.staleness_minutes < 0:
            raise ValueError("staleness horizon must be non-negative")


@dataclass
class ExpirySlice:
    """Mid prices for one expiry at one evaluation instant (NaN = not usable)."""

    eval_time: np.datetime64
    expiry: np.datetime64
    strikes: np.ndarray
    call_mid: np.ndarray
    put_mid: np.ndarray

    def __post_init__(self):
        self.eval_time = to_datetime64(self.eval_time)
        self.expiry = to_datetime64(self.expiry)
        self.strikes = np.asarray(self.strikes, dtype=np.float64)
        self.call_mid = np.asarray(self.call_mid, dtype=np.float64)
        self.put_mid = np.asarray(self.put_mid, dtype=np.float64)
        if not (self.strikes.shape == self.call_mid.shape == self.put_mid.shape):
            raise ValueError("strike and mid arrays differ in shape")
        if self.strikes.size and (np.any(self.strikes <= 0) or np.any(np.diff(self.strikes) <= 0)):
            raise ValueError("strikes must be positive and strictly increasing")
        for mids in (self.call_mid, self.put_mid):
            if np.any(mids[~np.isnan(mids)] <= 0):
                raise ValueError("mids must be positive when present")
        if not self.expiry > self.eval_time:
            raise ValueError("expiry must be after the evaluation time")

    @classmethod
    def from_entries(cls, eval_time, expiry, entries):
        """Build from ``(strike, call_mid or None, put_mid or None)`` tuples."""
        entries = sorted(entries)
        nan = float("nan")
        return cls(
            eval_time, expiry,
            [e[0] for e in entries],
            [nan if e[1] is None else e[1] for e in entries],
            [nan if e[2] is None else e[2] for e in entries],
        )

    @property
    def minutes_to_expiry(self):
        return (self.expiry - self.eval_time).astype(np.int64) / 60.0


@dataclass(frozen=True)
class VarianceContribution:
    sigma_sq: float
    T: float
    minutes_to_expiry: float
    forward: float
    k0: float
    n_quotes: int = 0


def forward_price(slc, params=IndexParams()):
    """Put-call parity forward at the strike with the smallest |call - put|.

    Returns ``(F, K0)`` where K0 is the largest listed strike not above F,
    or the smallest strike when F lies below the whole chain.
    """
    both = ~np.isnan(slc.call_mid) & ~np.isnan(slc.put_mid)
    if not both.any():
        raise VolIndexError("no strike has both call and put quoted")
    diff = np.abs(slc.call_mid - slc.put_mid)
    diff[~both] = np.inf
    j = int(np.argmin(diff))
    T = slc.minutes_to_expiry / YEAR_MINUTES
    F = slc.strikes[j] + math.exp(params.risk_free_rate * T) * (slc.call_mid[j] - slc.put_mid[j])
    below = slc.strikes[slc.strikes <= F]
    k0 = below[-1] if below.size else slc.strikes[0]
    return float(F), float(k0)


def _otm_mids(slc, k0, truncate):
    i0 = int(np.searchsorted(slc.strikes, k0))
    q = np.where(slc.strikes < k0, slc.put_mid, slc.call_mid)
    at = (slc.call_mid[i0], slc.put_mid[i0])
    q[i0] = np.nan if np.isnan(at).all() else np.nanmean(at)
    if truncate:
        # stop walking outward after two consecutive missing/zero-bid strikes
        for step in (-1, 1):
            run = 0
            i = i0 + step
            while 0 <= i < q.size:
                run = run + 1 if np.isnan(q[i]) else 0
                if run == 2:
                    if step < 0:
                        q[:i] = np.nan
                    else:
                        q[i + 1:] = np.nan
                    break
                i += step
    return q


def variance_contribution(slc, params=IndexParams()):
    """Annualised variance of one expiry from its out-of-the-money strip."""
    F, k0 = forward_price(slc, params)
    q = _otm_mids(slc, k0, params.zero_bid_truncation)
    usable = ~np.isnan(q)
    n = int(usable.sum())
    if n == 0:
        raise VolIndexError("all out-of-the-money mids absent")
    if n < params.min_quotes_per_expiry:
        raise VolIndexError(f"insufficient usable quotes ({n} < {params.min_quotes_per_expiry})")
    K = slc.strikes[usable]
    Q = q[usable]
    dK = np.empty_like(K)
    dK[1:-1] = (K[2:] - K[:-2]) / 2.0
    dK[0] = K[1] - K[0]
    dK[-1] = K[-1] - K[-2]
    minutes = slc.minutes_to_expiry
    T = minutes / YEAR_MINUTES
    growth = math.exp(params.risk_free_rate * T)
    strip = float(np.sum(dK / (K * K) * Q))
    sigma_sq = 2.0 / T * growth * strip - (F / k0 - 1.0) ** 2 / T
    return VarianceContribution(sigma_sq, T, minutes, F, k0, n)


def index_radicand(near, nxt, params=IndexParams()):
    n1, n2 = near.minutes_to_expiry, nxt.minutes_to_expiry
    if n1 == n2:
        raise VolIndexError("near and next expiries coincide")
    if not 0 < n1 < n2:
        raise VolIndexError("need 0 < near minutes < next minutes")
    n7 = params.target_maturity_minutes
    w1 = (n2 - n7) / (n2 - n1)
    w2 = (n7 - n1) / (n2 - n1)
    a = near.T * near.sigma_sq * w1
    b = nxt.T * nxt.sigma_sq * w2
    blended = a - b if params.eq2_minus else a + b
    return blended * params.year_minutes / n7


def interpolate_index(near, nxt, params=IndexParams()):
    """Blend two expiry variances to the target maturity; returns vol points."""
    r = index_radicand(near, nxt, params)
    if r < 0:
        log.warning("negative index radicand %.6g clamped to zero", r)
        return 0.0
    return 100.0 * math.sqrt(r)


def next_fridays(t):
    """The two Friday 08:00 UTC expiries strictly after ``t``."""
    t = to_datetime64(t)
    k = (t - _FRIDAY_0800) // WEEK + 1
    e1 = _FRIDAY_0800 + k * WEEK
    return e1, e1 + WEEK


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


@dataclass
class IndexReport:
    points: int = 0
    gaps: int = 0
    clamped_radicands: int = 0
    gap_reasons: Counter = field(default_factory=Counter)

    def as_dict(self):
        return {
            "points": self.points,
            "gaps": self.gaps,
            "clamped_radicands": self.clamped_radicands,
            "gap_reasons": dict(sorted(self.gap_reasons.items())),
        }


@dataclass
class IndexResult:
    series: UniformSeries
    report: IndexReport
    forward: UniformSeries  # near-term forward, usable as an index-price proxy


def _snapshots(table, expiry, times, staleness_s):
    """Latest non-stale mid per (strike, side) at each instant for one expiry.

    Returns ``strikes`` and ``(len(times), len(strikes))`` call/put mid arrays.
    """
    rows = np.flatnonzero(table.expiry == expiry)
    strikes = np.unique(table.strike[rows])
    if strikes.size == 0:
        return strikes, None, None
    ts = table.timestamp[rows].astype(np.int64)
    inst = np.searchsorted(strikes, table.strike[rows]) * 2 + table.is_call[rows]
    order = np.lexsort((ts, inst))
    inst, ts, rows = inst[order], ts[order], rows[order]
    key = (inst.astype(np.int64) << 40) | ts
    n_inst = 2 * strikes.size
    tq = times.astype(np.int64)
    qkey = (np.arange(n_inst, dtype=np.int64)[None, :] << 40) | tq[:, None]
    pos = np.searchsorted(key, qkey, side="right") - 1
    posc = np.clip(pos, 0, None)
    valid = (pos >= 0) & (inst[posc] == np.arange(n_inst)[None, :]) & (tq[:, None] - ts[posc] <= staleness_s)
    bid = table.bid[rows][posc]
    ask = table.ask[rows][posc]
    mid = np.where(valid & (bid > 0), 0.5 * (bid + ask), np.nan)
    return strikes, mid[:, 1::2], mid[:, 0::2]


def compute_vxbt_series(quotes, grid, params=IndexParams()):
    """Evaluate the index at every grid instant; failures become gaps."""
    table = quotes if isinstance(quotes, QuoteTable) else QuoteTable.from_records(quotes)
    times = grid.times
    out = np.full(times.size, np.nan)
    fwd = np.full(times.size, np.nan)
    report = IndexReport(points=times.size)
    staleness_s = int(round(params.staleness_minutes * 60))

    near_exp = _FRIDAY_0800 + ((times - _FRIDAY_0800) // WEEK + 1) * WEEK
    for e1 in np.unique(near_exp):
        idx = np.flatnonzero(near_exp == e1)
        block = times[idx]
        e2 = e1 + WEEK
        k1, c1, p1 = _snapshots(table, e1, block, staleness_s)
        k2, c2, p2 = _snapshots(table, e2, block, staleness_s)
        for j, (i, t) in enumerate(zip(idx, block)):
            if c1 is None or c2 is None:
                report.gap_reasons["missing expiry"] += 1
                continue
            try:
                near = variance_contribution(ExpirySlice(t, e1, k1, c1[j], p1[j]), params)
                nxt = variance_contribution(ExpirySlice(t, e2, k2, c2[j], p2[j]), params)
                r = index_radicand(near, nxt, params)
            except VolIndexError as exc:
                report.gap_reasons[str(exc).split(" (")[0]] += 1
                continue
            if r < 0:
                report.clamped_radicands += 1
                r = 0.0
            out[i] = 100.0 * math.sqrt(r)
            fwd[i] = near.forward
    report.gaps = int(np.isnan(out).sum())
    if report.clamped_radicands:
        log.warning("%d negative radicands clamped to zero", report.clamped_radicands)
    return IndexResult(
        UniformSeries.on_grid(grid, out, "vxbt"),
        report,
        UniformSeries.on_grid(grid, fwd, "index"),
    )
