import datetime as dt
import math

import numpy as np
import pytest

from gplstm.data import (
    DataError,
    NormStats,
    ReturnSeries,
    SyntheticSpec,
    build_samples,
    fit_normalizer,
    ingest_csv,
    log_return,
    prepare_stock,
    simulate_synthetic,
    split_dataset,
    split_sizes,
    write_csv,
)
from gplstm.evaluation import acf_pacf


def series(n, seed=0, stock="A"):
    dates = [dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(n)]
    return ReturnSeries(stock, dates, np.random.default_rng(seed).normal(0, 0.01, n))


class TestLogReturn:
    def test_values(self):
        assert log_return(100, 105) == pytest.approx(0.048790, abs=1e-6)
        assert log_return(37.5, 37.5) == 0.0
        assert log_return(105, 100) == -log_return(100, 105)

    def test_nonpositive(self):
        with pytest.raises(DataError):
            log_return(0.0, 1.0)


class TestNormalizer:
    def test_plug_in(self):
        assert NormStats(0.01, 0.05).apply(0.03) == pytest.approx(0.4)

    def test_roundtrip(self):
        st = NormStats(0.002, 0.07)
        r = np.random.default_rng(0).normal(size=1000)
        np.testing.assert_allclose(st.invert(st.apply(r)), r, atol=1e-12)

    def test_training_range(self):
        r = np.random.default_rng(1).normal(0.001, 0.02, 500)
        x = fit_normalizer(r).apply(r)
        assert np.max(np.abs(x)) <= 1.0
        assert abs(np.mean(x)) < 1e-12

    def test_modes(self):
        r = np.array([-0.02, 0.01, 0.03])
        assert fit_normalizer(r, "literal").scale == 0.03
        x = fit_normalizer(r, "minmax").apply(r)
        assert x.min() == 0.0 and x.max() == 1.0

    def test_degenerate(self):
        with pytest.raises(DataError, match="degenerate"):
            fit_normalizer(np.zeros(10))
        with pytest.raises(DataError):
            fit_normalizer(np.ones(3), "zscore")


class TestWindows:
    def test_counts(self):
        st = NormStats(0.0, 1.0)
        assert len(build_samples(series(21), st)) == 1
        assert len(build_samples(series(57), st)) == 37
        with pytest.raises(DataError):
            build_samples(series(20), st)

    def test_layout(self):
        s = series(30)
        st = NormStats(0.0, 0.5)
        smp = build_samples(s, st)
        r = s.returns / 0.5
        np.testing.assert_array_equal(smp.windows[3, :, 0], r[3:23])
        assert smp.labels[3] == r[23]
        assert smp.dates[3] == s.dates[23] and smp.index[3] == 23

    def test_positive_signs(self):
        s = ReturnSeries("P", series(40).dates, np.linspace(0.01, 0.02, 40))
        assert np.all(build_samples(s, NormStats(0.0, 1.0)).windows[:, :, 1] == 1)


class TestSplit:
    def test_sizes(self):
        assert split_sizes(1000) == (490, 210, 300)

    def test_partition_and_chronology(self):
        smp = build_samples(series(1020), NormStats(0.0, 1.0))
        sp = split_dataset(smp)
        idx = np.concatenate([sp.train.index, sp.validation.index, sp.test.index])
        assert np.array_equal(idx, smp.index)
        assert max(sp.train.dates) < min(sp.validation.dates) < min(sp.test.dates)

    def test_too_short(self):
        with pytest.raises(DataError):
            split_sizes(305)

    def test_normalizer_uses_training_rows_only(self):
        s = series(700)
        s.returns[-300:] *= 50  # test-period shock must not move the stats
        stats, sp = prepare_stock(s)
        n_train = len(sp.train)
        ref = fit_normalizer(s.returns[: 20 + n_train])
        assert stats == ref


class TestSynthetic:
    def test_deterministic(self):
        a = simulate_synthetic(SyntheticSpec(), 3, 300, seed=4)
        b = simulate_synthetic(SyntheticSpec(), 3, 300, seed=4)
        for x, y in zip(a, b):
            assert x.stock_id == y.stock_id and np.array_equal(x.returns, y.returns)

    def test_garch_variance(self):
        spec = SyntheticSpec(mode="garch")
        r = simulate_synthetic(spec, 1, 100_000, seed=0)[0].returns
        target = spec.k0 / (1 - spec.alpha1 - spec.rho1)
        assert np.var(r) == pytest.approx(target, rel=0.1)

    def test_regime_not_iid(self):
        r = simulate_synthetic(SyntheticSpec(mode="regime"), 1, 10_000, seed=0)[0].returns
        acf, _ = acf_pacf(np.abs(r), 1)
        assert acf[1] > 0.1

    def test_bad_mode(self):
        with pytest.raises(DataError):
            simulate_synthetic(SyntheticSpec(mode="levy"), 1, 200)


class TestCsv:
    def test_prices(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("date,stock_id,first_price,last_price\n2020-01-02,AAA,100,105\n")
        (s,) = ingest_csv(p)
        assert s.returns[0] == pytest.approx(0.048790, abs=1e-6)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        assert ingest_csv(p) == []

    def test_sorted(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("date,stock_id,log_return\n2020-01-03,B,0.3\n2020-01-01,B,0.1\n2020-01-02,B,0.2\n")
        (s,) = ingest_csv(p)
        assert s.returns.tolist() == [0.1, 0.2, 0.3]

    @pytest.mark.parametrize("body,msg", [
        ("2020-01-01,B\n", ":2: expected 3 fields"),
        ("2020-13-01,B,0.1\n", ":2: malformed"),
        ("2020-01-01,B,abc\n", ":2: malformed"),
        ("2020-01-01,B,0.1\n2020-01-01,B,0.2\n", ":3: duplicate"),
    ])
    def test_errors_carry_line(self, tmp_path, body, msg):
        p = tmp_path / "bad.csv"
        p.write_text("date,stock_id,log_return\n" + body)
        with pytest.raises(DataError, match=msg):
            ingest_csv(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("day,ticker,ret\n")
        with pytest.raises(DataError, match="header"):
            ingest_csv(p)

    def test_roundtrip(self, tmp_path):
        data = simulate_synthetic(SyntheticSpec(), 2, 120, seed=1)
        write_csv(data, tmp_path / "s.csv")
        back = ingest_csv(tmp_path / "s.csv")
        for a, b in zip(data, back):
            assert a.dates == b.dates and np.array_equal(a.returns, b.returns)
