import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from fearlab.market_data import QuoteTable
from fearlab.series import Grid
from fearlab.synthetic import bs_quote_stream, expiry_slice_arrays
from fearlab.volindex import (
    ExpirySlice,
    IndexParams,
    VarianceContribution,
    VolIndexError,
    compute_vxbt_series,
    forward_price,
    index_radicand,
    interpolate_index,
    next_fridays,
    variance_contribution,
)

T0 = np.datetime64("2019-05-01T00:00:00", "s")


def _slice(minutes, strikes, calls, puts):
    return ExpirySlice(T0, T0 + np.timedelta64(int(minutes * 60), "s"), strikes, calls, puts)


def _bs_slice(sigma, days, spot=9000.0, step=None, width_sd=5.0):
    years = days * 1440 / 525600
    sd = sigma * math.sqrt(years)
    step = step or spot * sd / 200
    strikes = np.arange(spot * math.exp(-width_sd * sd), spot * math.exp(width_sd * sd), step)
    strikes = np.round(strikes, 6)
    c, p = expiry_slice_arrays(spot, sigma, years, strikes)
    return _slice(days * 1440, strikes, c, p)


def _reference_sigma_sq(slc, rate=0.0):
    """Straight-line re-evaluation of the single-expiry variance, one strike at a time."""
    T = slc.minutes_to_expiry / 525600
    best, kstar = math.inf, None
    for k, c, p in zip(slc.strikes, slc.call_mid, slc.put_mid):
        if not (math.isnan(c) or math.isnan(p)) and abs(c - p) < best:
            best, kstar, diff = abs(c - p), k, c - p
    F = kstar + math.exp(rate * T) * diff
    below = [k for k in slc.strikes if k <= F]
    k0 = below[-1] if below else slc.strikes[0]
    usable = []
    for k, c, p in zip(slc.strikes, slc.call_mid, slc.put_mid):
        if k < k0:
            q = p
        elif k > k0:
            q = c
        else:
            present = [v for v in (c, p) if not math.isnan(v)]
            q = sum(present) / len(present) if present else math.nan
        if not math.isnan(q):
            usable.append((k, q))
    total = 0.0
    for i, (k, q) in enumerate(usable):
        if i == 0:
            dk = usable[1][0] - k
        elif i == len(usable) - 1:
            dk = k - usable[i - 1][0]
        else:
            dk = (usable[i + 1][0] - usable[i - 1][0]) / 2
        total += dk / (k * k) * math.exp(rate * T) * q
    return 2 / T * total - (F / k0 - 1) ** 2 / T


class TestForward:
    def test_single_strike(self):
        assert forward_price(_slice(1440, [100.0], [5.0], [5.0])) == (100.0, 100.0)

    def test_three_strikes(self):
        slc = _slice(1440, [90.0, 100.0, 110.0], [12.0, 5.0, 2.0], [2.0, 5.0, 12.0])
        assert forward_price(slc) == (100.0, 100.0)

    def test_black_scholes_chain(self):
        strikes = np.arange(250.0, 27001.0, 250.0)
        c, p = expiry_slice_arrays(9000.0, 0.8, 5 * 1440 / 525600, strikes)
        c, p = np.where(c > 0, c, np.nan), np.where(p > 0, p, np.nan)
        F, k0 = forward_price(_slice(5 * 1440, strikes, c, p))
        assert abs(F - 9000.0) <= 250.0
        assert k0 <= F < k0 + 250.0

    def test_forward_below_chain_uses_smallest_strike(self):
        slc = _slice(1440, [100.0, 110.0], [1.0, 0.5], [10.0, 20.0])
        F, k0 = forward_price(slc)
        assert F == 91.0 and k0 == 100.0

    def test_no_pair(self):
        with pytest.raises(VolIndexError, match="both call and put"):
            forward_price(_slice(1440, [90.0, 100.0], [5.0, np.nan], [np.nan, 5.0]))

    def test_rate_growth(self):
        slc = _slice(525600, [100.0], [6.0], [5.0])
        F, _ = forward_price(slc, IndexParams(risk_free_rate=0.05))
        assert F == pytest.approx(100.0 + math.exp(0.05))


class TestVarianceContribution:
    def test_degenerate_chain(self):
        with pytest.raises(VolIndexError, match="insufficient usable quotes"):
            variance_contribution(_slice(1440, [100.0], [5.0], [5.0]))

    def test_atm_second_term_vanishes(self):
        strikes = [80.0, 90.0, 100.0, 110.0, 120.0]
        calls = [21.0, 12.0, 5.0, 1.5, 0.4]
        puts = [0.3, 1.2, 5.0, 11.0, 20.5]
        slc = _slice(7200, strikes, calls, puts)
        v = variance_contribution(slc)
        assert v.forward == v.k0 == 100.0
        T = 7200 / 525600
        strip = 10 / 80**2 * 0.3 + 10 / 90**2 * 1.2 + 10 / 100**2 * 5.0 + 10 / 110**2 * 1.5 + 10 / 120**2 * 0.4
        assert v.sigma_sq == pytest.approx(2 / T * strip, rel=1e-14)
        assert v.T == T and v.minutes_to_expiry == 7200

    def test_black_scholes_recovery(self):
        v = variance_contribution(_bs_slice(0.5, 7))
        assert abs(v.sigma_sq - 0.25) <= 0.05 * 0.25

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        strikes = np.cumsum(rng.uniform(50, 400, 30)) + 5000
        spot = float(np.median(strikes))
        c, p = expiry_slice_arrays(spot, rng.uniform(0.3, 1.2), rng.uniform(1, 14) / 365, strikes)
        c, p = c.copy(), p.copy()
        c[rng.random(30) < 0.15] = np.nan
        p[rng.random(30) < 0.15] = np.nan
        c[c < 1e-6] = np.nan
        p[p < 1e-6] = np.nan
        slc = _slice(rng.integers(1440, 20000), strikes, c, p)
        assert variance_contribution(slc).sigma_sq == pytest.approx(_reference_sigma_sq(slc), rel=1e-12)

    def test_truncation_flag_drops_far_wings(self):
        strikes = np.arange(60.0, 141.0, 10.0)
        calls = [41, 31, 21, 12, 5, 1.5, 0.4, 0.1, 0.05]
        puts = [0.05, np.nan, np.nan, 1.2, 5, 11, 20.5, 30.2, 40.1]
        slc = _slice(7200, strikes, calls, puts)
        plain = variance_contribution(slc)
        trunc = variance_contribution(slc, IndexParams(zero_bid_truncation=True))
        assert plain.n_quotes == trunc.n_quotes + 1
        assert trunc.sigma_sq < plain.sigma_sq

    @given(st.floats(0.01, 1e4), st.integers(0, 1))
    def test_scale_invariance(self, lam, which):
        slc = [_bs_slice(0.7, 3), _bs_slice(0.4, 10, step=100.0)][which]
        scaled = ExpirySlice(slc.eval_time, slc.expiry, slc.strikes * lam, slc.call_mid * lam, slc.put_mid * lam)
        a, b = variance_contribution(slc), variance_contribution(scaled)
        assert b.sigma_sq == pytest.approx(a.sigma_sq, rel=1e-10)

    @given(st.integers(0, 10**6), st.floats(1e-4, 50.0))
    def test_monotone_in_mid(self, seed, bump):
        rng = np.random.default_rng(seed)
        base = _bs_slice(0.6, 7, step=200.0)
        v0 = variance_contribution(base)
        i = int(rng.integers(base.strikes.size))
        calls, puts = base.call_mid.copy(), base.put_mid.copy()
        if base.strikes[i] < v0.k0:
            puts[i] += bump
        elif base.strikes[i] > v0.k0:
            calls[i] += bump
        else:
            calls[i] += bump
            puts[i] += bump
        bumped = ExpirySlice(base.eval_time, base.expiry, base.strikes, calls, puts)
        assume(forward_price(bumped) == (v0.forward, v0.k0))
        assert variance_contribution(bumped).sigma_sq >= v0.sigma_sq


def _vc(sigma_sq, minutes):
    return VarianceContribution(sigma_sq, minutes / 525600, minutes, 100.0, 100.0)


class TestInterpolation:
    @given(st.floats(1e-4, 25.0), st.floats(1.0, 10079.0), st.floats(10081.0, 60000.0))
    def test_equal_variance_identity(self, v, n1, n2):
        assert interpolate_index(_vc(v, n1), _vc(v, n2)) == pytest.approx(100 * math.sqrt(v), rel=1e-9, abs=1e-9)

    def test_arbitrary_precision_oracle(self):
        mpmath.mp.dps = 50
        n1, n2, n7, ny = (mpmath.mpf(x) for x in (4320, 14400, 10080, 525600))
        s1, s2 = mpmath.mpf("0.25"), mpmath.mpf("0.36")
        w1, w2 = (n2 - n7) / (n2 - n1), (n7 - n1) / (n2 - n1)
        want = 100 * mpmath.sqrt((n1 / ny * s1 * w1 + n2 / ny * s2 * w2) * ny / n7)
        got = interpolate_index(_vc(0.25, 4320), _vc(0.36, 14400))
        assert abs(got - float(want)) <= 1e-9

    def test_near_at_target_collapses(self):
        got = interpolate_index(_vc(0.49, 10080), _vc(2.0, 20160))
        assert got == pytest.approx(70.0, rel=1e-12)

    def test_equal_expiries_error(self):
        with pytest.raises(VolIndexError):
            interpolate_index(_vc(0.2, 5000), _vc(0.2, 5000))

    def test_printed_minus_flag(self):
        near, nxt = _vc(0.25, 4320), _vc(0.36, 14400)
        w1, w2 = (14400 - 10080) / 10080, (10080 - 4320) / 10080
        a, b = near.T * 0.25 * w1, nxt.T * 0.36 * w2
        assert index_radicand(near, nxt) == pytest.approx((a + b) * 525600 / 10080, rel=1e-14)
        minus = IndexParams(eq2_minus=True)
        assert index_radicand(near, nxt, minus) == pytest.approx((a - b) * 525600 / 10080, rel=1e-14)
        # the printed form gives a negative radicand for ordinary inputs and is clamped
        assert interpolate_index(near, nxt, minus) == 0.0


class TestSchedule:
    def test_next_fridays_strictly_after(self):
        e1, e2 = next_fridays("2019-05-03T08:00:00")
        assert str(e1) == "2019-05-10T08:00:00" and str(e2) == "2019-05-17T08:00:00"
        e1, _ = next_fridays("2019-05-03T07:59:59")
        assert str(e1) == "2019-05-03T08:00:00"


@pytest.fixture(scope="module")
def flat_stream():
    table, _, _ = bs_quote_stream("2019-05-01", "2019-05-02", 0.6, seed=3)
    return table


class TestSeries:
    def test_flat_vol_stream(self, flat_stream):
        res = compute_vxbt_series(flat_stream, Grid("2019-05-01", "2019-05-02"))
        assert len(res.series) == 288
        v = res.series.values
        assert np.all(np.abs(v - 60.0) <= 2.0)
        assert res.report.gaps == 0 and res.report.points == 288

    def test_single_expiry_is_gap(self, flat_stream):
        keep = flat_stream.expiry == np.datetime64("2019-05-03T08:00:00")
        res = compute_vxbt_series(flat_stream.take(keep), Grid("2019-05-01", "2019-05-01T01:00"))
        assert res.report.gaps == 12
        assert np.isnan(res.series.values).all()
        assert res.report.gap_reasons == {"missing expiry": 12}

    def _with_extra(self, table, when, bid, ask, strike=20050.0):
        extra = QuoteTable([when], [np.datetime64("2019-05-03T08:00:00")], [strike], [True], [bid], [ask])
        cols = [np.concatenate([getattr(table, c), getattr(extra, c)])
                for c in ("timestamp", "expiry", "strike", "is_call", "bid", "ask")]
        return QuoteTable(*cols).sorted()

    def test_stale_outlier_ignored(self, flat_stream):
        grid = Grid("2019-05-01T12:00", "2019-05-01T12:05")
        base = compute_vxbt_series(flat_stream, grid).series.values
        stale = self._with_extra(flat_stream, np.datetime64("2019-05-01T10:59:00"), 5000.0, 5001.0)
        assert compute_vxbt_series(stale, grid).series.values.tolist() == base.tolist()
        fresh = self._with_extra(flat_stream, np.datetime64("2019-05-01T11:01:00"), 5000.0, 5001.0)
        assert compute_vxbt_series(fresh, grid).series.values[0] != base[0]

    def test_zero_bid_excluded(self, flat_stream):
        grid = Grid("2019-05-01T12:00", "2019-05-01T12:05")
        base = compute_vxbt_series(flat_stream, grid).series.values
        zero = self._with_extra(flat_stream, np.datetime64("2019-05-01T11:59:00"), 0.0, 5001.0)
        assert compute_vxbt_series(zero, grid).series.values.tolist() == base.tolist()

    def test_scaled_stream(self, flat_stream):
        grid = Grid("2019-05-01T06:00", "2019-05-01T07:00")
        t = flat_stream
        scaled = QuoteTable(t.timestamp, t.expiry, t.strike * 3.5, t.is_call, t.bid * 3.5, t.ask * 3.5)
        a = compute_vxbt_series(t, grid).series.values
        b = compute_vxbt_series(scaled, grid).series.values
        np.testing.assert_allclose(b, a, rtol=1e-10)
