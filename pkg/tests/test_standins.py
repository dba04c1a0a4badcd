"""Offline dataset generator tests: determinism, caching, value ranges."""

import numpy as np
import pytest

from vflsim import standins
from vflsim.datasets import CREDIT_FEATURES


@pytest.fixture()
def fresh_cache(tmp_path, monkeypatch):
    monkeypatch.setenv(standins.CACHE_ENV, str(tmp_path))
    return tmp_path


def column(table, name):
    return table.features[:, table.feature_names.index(name)]


class TestDigitGenerator:
    def test_raw_render_shapes_and_balance(self):
        images, labels = standins.generate_digit_images(20, seed=7)
        assert images.shape == (20, 28, 28) and images.dtype == np.uint8
        np.testing.assert_array_equal(np.bincount(labels, minlength=10), 2)

    def test_table_shape_and_pixel_range(self, fresh_cache):
        table = standins.digit_table(40, seed=3)
        assert table.features.shape == (40, 784)
        assert table.class_count == 10
        assert table.features.min() >= 0.0 and table.features.max() <= 1.0
        # blank canvases would pass the range check; demand actual strokes
        assert table.features.std() > 0.05
        np.testing.assert_array_equal(np.bincount(table.labels, minlength=10), 4)

    def test_cache_files_land_in_env_dir(self, fresh_cache):
        standins.digit_table(20, seed=3)
        names = sorted(p.name for p in fresh_cache.iterdir())
        assert names == [
            f"digits-v{standins._DIGITS_VERSION}-n20-s3-images.idx",
            f"digits-v{standins._DIGITS_VERSION}-n20-s3-labels.idx",
        ]

    def test_second_call_reads_cache(self, fresh_cache):
        first = standins.digit_table(20, seed=3)
        stamps = {p.name: p.stat().st_mtime_ns for p in fresh_cache.iterdir()}
        second = standins.digit_table(20, seed=3)
        assert {p.name: p.stat().st_mtime_ns for p in fresh_cache.iterdir()} == stamps
        np.testing.assert_array_equal(first.features, second.features)
        np.testing.assert_array_equal(first.labels, second.labels)

    def test_fresh_caches_agree(self, tmp_path, monkeypatch):
        tables = []
        for sub in ("a", "b"):
            monkeypatch.setenv(standins.CACHE_ENV, str(tmp_path / sub))
            tables.append(standins.digit_table(20, seed=5))
        np.testing.assert_array_equal(tables[0].features, tables[1].features)
        np.testing.assert_array_equal(tables[0].labels, tables[1].labels)

    def test_seed_changes_images(self, fresh_cache):
        a = standins.digit_table(20, seed=3)
        b = standins.digit_table(20, seed=4)
        assert not np.array_equal(a.features, b.features)


@pytest.fixture(scope="module")
def table(tmp_path_factory):
    import os

    old = os.environ.get(standins.CACHE_ENV)
    os.environ[standins.CACHE_ENV] = str(tmp_path_factory.mktemp("credit"))
    try:
        yield standins.credit_table(4000, seed=11)
    finally:
        if old is None:
            del os.environ[standins.CACHE_ENV]
        else:
            os.environ[standins.CACHE_ENV] = old


class TestCreditGenerator:
    def test_schema(self, table):
        assert table.features.shape == (4000, 23)
        assert table.feature_names == CREDIT_FEATURES
        assert table.class_count == 2
        assert set(np.unique(table.labels)) <= {0, 1}

    def test_default_rate_matches_calibration(self, table):
        # binomial sd at n=4000 is ~0.0066; 0.02 is a three-sigma band
        assert abs(table.labels.mean() - standins._DEFAULT_RATE) < 0.02

    def test_repayment_statuses_are_small_integers(self, table):
        for name in ("PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6"):
            values = column(table, name)
            np.testing.assert_array_equal(values, np.round(values))
            assert values.min() >= -2 and values.max() <= 8

    def test_demographics_use_coded_categories(self, table):
        assert set(np.unique(column(table, "SEX"))) <= {1.0, 2.0}
        assert set(np.unique(column(table, "EDUCATION"))) <= {1.0, 2.0, 3.0, 4.0}
        assert set(np.unique(column(table, "MARRIAGE"))) <= {1.0, 2.0, 3.0}
        ages = column(table, "AGE")
        assert ages.min() >= 21 and ages.max() <= 79

    def test_amount_columns_plausible(self, table):
        limits = column(table, "LIMIT_BAL")
        assert limits.min() >= 10000 and limits.max() <= 1000000
        np.testing.assert_array_equal(limits % 10000, 0)
        for month in range(1, 7):
            assert column(table, f"PAY_AMT{month}").min() >= 0

    def test_csv_cache_round_trip(self, fresh_cache):
        first = standins.credit_table(500, seed=2)
        path = fresh_cache / f"credit-v{standins._CREDIT_VERSION}-n500-s2.csv"
        assert path.exists()
        stamp = path.stat().st_mtime_ns
        second = standins.credit_table(500, seed=2)
        assert path.stat().st_mtime_ns == stamp
        np.testing.assert_array_equal(first.features, second.features)
        np.testing.assert_array_equal(first.labels, second.labels)

    def test_loaded_table_matches_generator(self, fresh_cache):
        loaded = standins.credit_table(500, seed=2)
        raw = standins.generate_credit_frame(500, seed=2)
        # CSV stores six significant digits, so large amounts round slightly
        np.testing.assert_allclose(loaded.features, raw.features, rtol=1e-5)
        np.testing.assert_array_equal(loaded.labels, raw.labels)

    def test_fresh_caches_agree(self, tmp_path, monkeypatch):
        tables = []
        for sub in ("a", "b"):
            monkeypatch.setenv(standins.CACHE_ENV, str(tmp_path / sub))
            tables.append(standins.credit_table(500, seed=9))
        np.testing.assert_array_equal(tables[0].features, tables[1].features)
        np.testing.assert_array_equal(tables[0].labels, tables[1].labels)

    def test_seed_changes_rows(self, fresh_cache):
        a = standins.credit_table(500, seed=2)
        b = standins.credit_table(500, seed=3)
        assert not np.array_equal(a.features, b.features)
