import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fearlab import _kernels
from fearlab.market_data import TrendsRecord, TweetRecord
from fearlab.series import Grid, UniformSeries
from fearlab.signals import Lexicon, aggregate_tweets, compound_score, ewma, upsample_linear

LEX = Lexicon({"good": 2.0, "bad": -2.5, "great": 3.1, "crash": -3.9})
START = np.datetime64("2019-05-01T00:00:00", "s")


def _series(values):
    return UniformSeries(START, 300, values, "x")


class TestCompound:
    def test_empty(self):
        assert compound_score("", LEX) == 0.0

    def test_single_token(self):
        assert compound_score("good", LEX) == pytest.approx(2 / math.sqrt(19), rel=1e-15)

    def test_duplication_increases_magnitude(self):
        one, two = compound_score("good", LEX), compound_score("good good", LEX)
        assert one < two < 1.0

    def test_case_and_punctuation(self):
        assert compound_score("GOOD!!! #bitcoin", LEX) == compound_score("good", LEX)

    @given(st.lists(st.sampled_from(["good", "bad", "great", "crash", "btc", "moon"]), max_size=40))
    def test_bounded_and_signed(self, words):
        text = " ".join(words)
        s = sum(LEX.entries.get(w, 0.0) for w in words)
        c = compound_score(text, LEX)
        assert -1.0 < c < 1.0
        assert np.sign(c) == np.sign(round(s, 9))

    def test_lexicon_roundtrip(self, tmp_path):
        LEX.dump(tmp_path / "lex.tsv")
        assert Lexicon.load(tmp_path / "lex.tsv").entries == LEX.entries

    def test_lexicon_range(self):
        with pytest.raises(ValueError):
            Lexicon({"x": 4.5})


class TestAggregate:
    def test_symmetric_bucket(self):
        tw = [TweetRecord(START + np.timedelta64(s, "s"), "x", False, c) for s, c in ((10, 0.5), (20, 0.0), (299, -0.5))]
        vol, sent = aggregate_tweets(tw, LEX, Grid(START, START + np.timedelta64(600, "s")))
        assert vol.values.tolist() == [3.0, 0.0]
        assert sent.values[0] == 0.0
        assert np.isnan(sent.values[1])

    def test_generator_counts(self, rng):
        grid = Grid("2019-05-01", "2019-05-02")
        counts = rng.poisson(rng.uniform(0, 8, len(grid)))
        tweets = []
        for k, c in enumerate(counts):
            for off in np.sort(rng.integers(0, 300, c)):
                tweets.append(TweetRecord(grid.start + np.timedelta64(300 * k + int(off), "s"), "good btc"))
        vol, sent = aggregate_tweets(tweets, LEX, grid)
        assert vol.values.tolist() == counts.astype(float).tolist()
        assert vol.values.sum() == len(tweets)
        assert np.isnan(sent.values[counts == 0]).all()
        np.testing.assert_allclose(sent.values[counts > 0], 2 / math.sqrt(19), rtol=1e-15)

    def test_outside_grid_ignored(self):
        tw = [TweetRecord(START - np.timedelta64(1, "s"), "good"), TweetRecord(START + np.timedelta64(600, "s"), "good")]
        vol, _ = aggregate_tweets(tw, LEX, Grid(START, START + np.timedelta64(600, "s")))
        assert vol.values.sum() == 0


def _ewma_reference(values, span):
    a = 2 / (span + 1)
    out, prev = [], math.nan
    for v in values:
        if math.isnan(v):
            out.append(prev)
            continue
        prev = v if math.isnan(prev) else a * v + (1 - a) * prev
        out.append(prev)
    return np.array(out)


class TestEwma:
    def test_constant(self):
        assert np.all(ewma(_series(np.full(50, 3.25))).values == 3.25)

    def test_unit_step(self):
        x = np.zeros(60)
        x[20:] = 1.0
        out = ewma(_series(x), 12).values
        k = np.arange(40)
        np.testing.assert_allclose(out[20:], 1 - (1 - 2 / 13) ** (k + 1), rtol=1e-13)
        assert np.all(out[:20] == 0)

    @given(st.lists(st.one_of(st.floats(-1e6, 1e6), st.just(math.nan)), min_size=1, max_size=80),
           st.integers(1, 48))
    def test_matches_recursion(self, values, span):
        out = ewma(_series(values), span).values
        np.testing.assert_allclose(out, _ewma_reference(values, span), rtol=1e-12, atol=1e-6, equal_nan=True)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=60), st.integers(0, 58), st.floats(-1e3, 1e3))
    def test_causal(self, values, t, new):
        t = t % (len(values) - 1)
        changed = list(values)
        changed[t + 1] = new
        a = ewma(_series(values)).values
        b = ewma(_series(changed)).values
        assert a[: t + 1].tolist() == b[: t + 1].tolist()

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=60))
    def test_within_prefix_bounds(self, values):
        out = ewma(_series(values)).values
        v = np.asarray(values)
        lo, hi = np.minimum.accumulate(v), np.maximum.accumulate(v)
        assert np.all(out >= lo - 1e-9) and np.all(out <= hi + 1e-9)

    def test_backends_agree(self, rng):
        x = rng.normal(size=500)
        x[rng.random(500) < 0.1] = np.nan
        a = _kernels.ewma_numpy(x, 2 / 13)
        b = _kernels.ewma_numba(x, 2 / 13)
        assert np.array_equal(a, b, equal_nan=True)


def _knots(times, values):
    return [TrendsRecord(t, float(v)) for t, v in zip(times, values)]


class TestUpsample:
    def test_midpoint(self):
        out = upsample_linear(_knots([START, START + np.timedelta64(1, "h")], [40, 60]),
                              Grid(START, START + np.timedelta64(70, "m")))
        assert out.values[6] == 50.0
        assert out.values[0] == 40.0 and out.values[12] == 60.0
        assert np.isnan(out.values[-1])

    def test_random_knots_oracle(self, rng):
        hours = START + np.arange(49) * np.timedelta64(3600, "s")
        vals = rng.uniform(0, 100, hours.size)
        grid = Grid(START, hours[-1] + np.timedelta64(300, "s"))
        out = upsample_linear(_knots(hours, vals), grid).values
        for i, t in enumerate(grid.times):
            sec = (t - START).astype(int)
            j = min(sec // 3600, 47)
            frac = (sec - 3600 * j) / 3600
            want = vals[j] + frac * (vals[j + 1] - vals[j])
            assert abs(out[i] - want) <= 1e-12

    @given(st.floats(-50, 50), st.floats(-10, 10))
    def test_affine_exact(self, a, b):
        hours = START + np.arange(6) * np.timedelta64(3600, "s")
        vals = a + b * np.arange(6)
        out = upsample_linear(_knots(hours, vals), Grid(START, hours[-1])).values
        want = a + b * np.arange(out.size) / 12
        np.testing.assert_allclose(out, want, rtol=1e-12, atol=1e-12)

    def test_needs_two_knots(self):
        with pytest.raises(ValueError):
            upsample_linear(_knots([START], [1.0]), Grid(START, START + np.timedelta64(1, "h")))
