"""Deterministic synthetic data: Black-Scholes quote streams, tweets, trends,
planted direction datasets and Gaussian blobs.

Used by the test-suite as independent oracles and by ``fearlab fixture`` to
write a self-contained end-to-end input set.
"""

import numpy as np
from scipy.special import ndtr

from .market_data import QuoteTable, TrendsRecord, TweetRecord
from .series import Grid, to_datetime64

YEAR_SECONDS = 525600 * 60
_FRIDAY_0800 = np.datetime64("1970-01-02T08:00:00", "s")
WEEK = np.timedelta64(7 * 86400, "s")


def bs_price(spot, strike, years, sigma, is_call, rate=0.0):
    """European Black-Scholes price (vectorised, no dividends)."""
    spot, strike, years, sigma = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (spot, strike, years, sigma)))
    sd = sigma * np.sqrt(years)
    fwd = spot * np.exp(rate * years)
    d1 = (np.log(fwd / strike) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    disc = np.exp(-rate * years)
    call = disc * (fwd * ndtr(d1) - strike * ndtr(d2))
    put = disc * (strike * ndtr(-d2) - fwd * ndtr(-d1))
    return np.where(is_call, call, put)


def friday_expiries(start, end, extra=2):
    """Friday 08:00 UTC expiries from the first after ``start`` until ``extra`` weeks past ``end``."""
    start, end = to_datetime64(start), to_datetime64(end)
    first = _FRIDAY_0800 + ((start - _FRIDAY_0800) // WEEK + 1) * WEEK
    out = [first]
    while out[-1] <= end + extra * WEEK:
        out.append(out[-1] + WEEK)
    return np.array(out, dtype="datetime64[s]")


def bs_quote_stream(start, end, sigma, *, spot0=9000.0, strike_step=100.0, strike_range=(0.3, 3.0),
                    refresh_minutes=1, half_spread=0.01, min_price=0.0, path_sigma=None, seed=0,
                    vol_path=None, max_live=3 * WEEK):
    """Quotes for every weekly Friday expiry, priced at flat volatility.

    ``sigma`` is the pricing volatility (or ``vol_path`` a per-refresh array of
    them); the spot follows a geometric random walk at ``path_sigma``
    (defaults to ``sigma``).  Prices below ``min_price`` get a zero bid.
    Returns ``(QuoteTable, refresh_times, spots)``.
    """
    rng = np.random.default_rng(seed)
    start, end = to_datetime64(start), to_datetime64(end)
    step = np.timedelta64(int(refresh_minutes * 60), "s")
    times = np.arange(start, end, step)
    n = times.size
    vols = np.full(n, float(sigma)) if vol_path is None else np.asarray(vol_path, dtype=np.float64)
    ps = vols if path_sigma is None else np.full(n, float(path_sigma))
    dt = refresh_minutes * 60 / YEAR_SECONDS
    shocks = rng.standard_normal(n)
    logret = ps * np.sqrt(dt) * shocks - 0.5 * ps * ps * dt
    logret[0] = 0.0
    spots = spot0 * np.exp(np.cumsum(logret))
    strikes = np.arange(np.floor(spot0 * strike_range[0] / strike_step) * strike_step,
                        spot0 * strike_range[1] + strike_step / 2, strike_step)
    strikes = strikes[strikes > 0]
    expiries = friday_expiries(start, end)

    cols = {k: [] for k in ("ts", "ex", "k", "call", "bid", "ask")}
    for e in expiries:
        live = np.flatnonzero(times < e)
        live = live[(e - times[live]) <= max_live]
        if live.size == 0:
            continue
        years = (e - times[live]).astype(np.int64) / YEAR_SECONDS
        for is_call in (True, False):
            px = bs_price(spots[live, None], strikes[None, :], years[:, None], vols[live, None], is_call)
            bid = np.where(px >= min_price, px * (1 - half_spread), 0.0)
            ask = np.maximum(px * (1 + half_spread), bid)
            cols["ts"].append(np.repeat(times[live], strikes.size))
            cols["ex"].append(np.full(live.size * strikes.size, e))
            cols["k"].append(np.tile(strikes, live.size))
            cols["call"].append(np.full(live.size * strikes.size, is_call))
            cols["bid"].append(bid.ravel())
            cols["ask"].append(ask.ravel())
    cat = {k: np.concatenate(v) for k, v in cols.items()}
    table = QuoteTable(cat["ts"], cat["ex"], cat["k"], cat["call"], cat["bid"], cat["ask"]).sorted()
    return table, times, spots


def expiry_slice_arrays(spot, sigma, years, strikes, rate=0.0):
    """Call and put mids for one synthetic expiry."""
    strikes = np.asarray(strikes, dtype=np.float64)
    return (bs_price(spot, strikes, years, sigma, True, rate),
            bs_price(spot, strikes, years, sigma, False, rate))


# ---------------------------------------------------------------------------
# directions
# ---------------------------------------------------------------------------

SERIES_NAMES = ("vxbt", "index", "tweet_volume", "tweet_sentiment", "trends")


def random_labels(rng, n):
    return rng.integers(-1, 2, size=n).astype(np.int8)


def random_directions(n, seed=0, start="2019-05-01T00:05:00", interval=300):
    """Five independent uniform ternary label series."""
    from .labeling import DirectionSeries

    rng = np.random.default_rng(seed)
    return {name: DirectionSeries(start, interval, random_labels(rng, n), name) for name in SERIES_NAMES}


def planted_directions(n, lag=3, seed=0, source="trends", horizon=1, start="2019-05-01T00:05:00", interval=300):
    """Random label series in which ``vxbt[t + horizon] == source[t - lag]``.

    Every other series is independent noise, so the only informative feature
    is ``(source, lag)``.
    """
    from .labeling import DirectionSeries

    rng = np.random.default_rng(seed)
    labels = {name: random_labels(rng, n) for name in SERIES_NAMES}
    shift = lag + horizon
    vx = labels["vxbt"]
    vx[shift:] = labels[source][:-shift]
    return {name: DirectionSeries(start, interval, v, name) for name, v in labels.items()}


def gaussian_blobs(n=3000, n_features=4, spread=1.0, separation=6.0, seed=0):
    """Three well separated isotropic Gaussian clusters labelled -1, 0, +1 (shuffled)."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(scale=separation, size=(3, n_features))
    y = rng.integers(0, 3, size=n)
    X = centres[y] + rng.normal(scale=spread, size=(n, n_features))
    return X, (y - 1).astype(np.int8)


# ---------------------------------------------------------------------------
# end-to-end fixture
# ---------------------------------------------------------------------------

_POSITIVE = ["moon", "bullish", "great", "gain", "love", "win", "pump", "good"]
_NEGATIVE = ["crash", "bearish", "fear", "loss", "dump", "scam", "bad", "panic"]
_NEUTRAL = ["bitcoin", "btc", "price", "today", "market", "chart", "hodl", "block"]

FIXTURE_LEXICON = {
    "moon": 2.5, "bullish": 2.0, "great": 3.1, "gain": 2.4, "love": 3.2, "win": 2.8, "pump": 1.5, "good": 1.9,
    "crash": -2.6, "bearish": -2.0, "fear": -2.2, "loss": -1.3, "dump": -1.6, "scam": -3.0, "bad": -2.5,
    "panic": -3.1,
}


def fixture_inputs(days=10, seed=7, start="2019-05-01T00:00:00"):
    """Correlated quote/tweet/trends/index-price streams for ``days`` days.

    Volatility follows a mean-reverting log process; tweet rate and search
    interest respond to it so the pipeline has structure to find.
    """
    rng = np.random.default_rng(seed)
    start = to_datetime64(start)
    end = start + np.timedelta64(days * 86400, "s")
    refresh = 5
    n = days * 1440 // refresh
    kappa, noise = 0.02 * refresh / 15, 0.04 * np.sqrt(refresh / 15)
    logv = np.empty(n)
    logv[0] = np.log(0.6)
    for i in range(1, n):
        logv[i] = logv[i - 1] + kappa * (np.log(0.6) - logv[i - 1]) + noise * rng.standard_normal()
    vols = np.exp(logv)
    quotes, qtimes, spots = bs_quote_stream(start, end, 0.6, vol_path=vols, strike_step=250.0,
                                            strike_range=(0.45, 1.8), refresh_minutes=refresh,
                                            half_spread=0.02, min_price=0.5, seed=seed + 1,
                                            max_live=2 * WEEK + np.timedelta64(3600, "s"))

    # hourly trends: scaled volatility plus noise
    hours = np.arange(start, end + np.timedelta64(3600, "s"), np.timedelta64(3600, "s"))
    hv = np.interp(hours.astype(np.int64), qtimes.astype(np.int64), vols)
    raw = hv + 0.05 * rng.standard_normal(hours.size)
    trends_vals = np.round(100 * (raw - raw.min()) / (raw.max() - raw.min()))
    trends = [TrendsRecord(t, float(v)) for t, v in zip(hours, trends_vals)]

    # tweets: Poisson counts per 5 minutes driven by volatility
    grid = Grid(start, end)
    gt = grid.times
    gv = np.interp(gt.astype(np.int64), qtimes.astype(np.int64), vols)
    rate = 4.0 * gv / 0.6
    counts = rng.poisson(rate)
    tweets = []
    for t, c, v in zip(gt, counts, gv):
        offs = np.sort(rng.integers(0, 300, size=c))
        p_neg = np.clip(0.3 + 0.5 * (v - 0.6), 0.05, 0.9)
        for o in offs:
            words = list(rng.choice(_NEUTRAL, size=3))
            mood = rng.random()
            if mood < p_neg:
                words.append(str(rng.choice(_NEGATIVE)))
            elif mood < p_neg + 0.3:
                words.append(str(rng.choice(_POSITIVE)))
            text = "#Bitcoin " + " ".join(words)
            retweet = rng.random() < 0.1
            if retweet and rng.random() < 0.5:
                text = "RT @someone " + text
                retweet = False
            tweets.append(TweetRecord(t + np.timedelta64(int(o), "s"), text, bool(retweet)))

    index_times = gt
    index_vals = np.interp(gt.astype(np.int64), qtimes.astype(np.int64), spots)
    return {
        "quotes": quotes,
        "tweets": tweets,
        "trends": trends,
        "index": (index_times, index_vals),
        "grid": grid,
        "lexicon": dict(FIXTURE_LEXICON),
    }
