from dataclasses import replace

import numpy as np
import pytest

from sohkit.errors import ValidationError
from sohkit.features import (
    FEATURE_IDS,
    cc_cv_split,
    extract_cycle_features,
    extract_feature_table,
    load_feature_csv,
    save_feature_csv,
    skewness,
    slope_between,
)
from sohkit.ingest import CycleRecord, compute_soh
from sohkit.select import pearson_correlation

from conftest import make_dataset, make_pair


def _moment_skew(xs):
    # independent oracle: population moments computed longhand
    n = len(xs)
    mean = sum(xs) / n
    m2 = sum((x - mean) ** 2 for x in xs) / n
    m3 = sum((x - mean) ** 3 for x in xs) / n
    return m3 / m2**1.5


class TestSkewness:
    def test_symmetric_is_zero(self):
        assert skewness(np.array([1.0, 2.0, 3.0])) == pytest.approx(0.0, abs=1e-12)

    def test_constant_not_computable(self):
        assert np.isnan(skewness(np.array([5.0, 5.0, 5.0])))

    def test_against_moment_oracle(self):
        xs = [1.0, 2.0, 7.0]
        expected = _moment_skew(xs)
        assert expected == pytest.approx(0.6309, abs=5e-5)
        assert skewness(np.array(xs)) == pytest.approx(expected, rel=1e-12)

    def test_too_short(self):
        with pytest.raises(ValidationError):
            skewness(np.array([1.0, 2.0]))

    def test_shift_and_scale(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            x = rng.normal(size=rng.integers(3, 40))
            if np.var(x) == 0:
                continue
            g = skewness(x)
            assert skewness(x + 13.7) == pytest.approx(g, rel=1e-9, abs=1e-9)
            assert skewness(x * 2.5) == pytest.approx(g, rel=1e-9, abs=1e-9)
            assert np.var(x * 2.5) == pytest.approx(np.var(x) * 2.5**2, rel=1e-12)


def _discharge(t, v):
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    n = len(t)
    return CycleRecord(
        cycle_index=1, phase="discharge", t=t, v_measured=v,
        i_measured=np.full(n, -2.0), temp=np.full(n, 25.0) + np.arange(n) * 0.01,
        v_load=v - 0.02, i_load=np.full(n, -2.0), measured_capacity=1.8,
    )


class TestSlope:
    def test_exact_line_recovery(self):
        t = np.arange(0.0, 600.0, 10.0)
        v = 4.0 - 6.667e-4 * (t - 50.0)
        rec = _discharge(t, v)
        assert slope_between(rec, 50.0, 500.0) == pytest.approx(-6.667e-4, rel=1e-12)

    def test_constant_voltage(self):
        t = np.arange(0.0, 600.0, 10.0)
        rec = _discharge(t, np.full(len(t), 3.8))
        assert slope_between(rec, 50.0, 500.0) == 0.0

    def test_two_point_equals_secant(self):
        rec = _discharge([0.0, 50.0, 500.0], [4.1, 4.0, 3.7])
        assert slope_between(rec, 50.0, 500.0) == pytest.approx(-0.3 / 450.0, rel=1e-12)

    def test_truncated_window_fits_to_end(self):
        t = np.arange(0.0, 300.0, 10.0)  # ends at 290 s, before 500 s
        v = 4.0 - 1e-3 * t
        rec = _discharge(t, v)
        assert slope_between(rec, 50.0, 500.0) == pytest.approx(-1e-3, rel=1e-12)

    def test_single_sample_window_not_computable(self):
        rec = _discharge([0.0, 55.0, 700.0], [4.1, 4.0, 3.6])
        assert np.isnan(slope_between(rec, 50.0, 60.0))

    def test_bad_window(self):
        rec = _discharge([0.0, 10.0], [4.0, 3.9])
        with pytest.raises(ValidationError):
            slope_between(rec, 500.0, 50.0)


def _charge(t, v, i):
    t = np.asarray(t, dtype=float)
    n = len(t)
    return CycleRecord(
        cycle_index=1, phase="charge", t=t, v_measured=np.asarray(v, dtype=float),
        i_measured=np.asarray(i, dtype=float), temp=np.full(n, 24.5),
        v_load=np.asarray(v, dtype=float) + 0.04, i_load=np.asarray(i, dtype=float),
    )


class TestCcCvSplit:
    def test_synthetic_ramp(self):
        # voltage hits 4.2 V exactly at 3000 s, current hits 0.02 A exactly at 9000 s
        t = np.arange(0.0, 10001.0, 100.0)
        v = np.minimum(3.6 + 0.6 * t / 3000.0, 4.2)
        i = np.where(t < 3000.0, 1.5, np.maximum(1.5 - (1.5 - 0.02) * (t - 3000.0) / 6000.0, 0.01))
        split = cc_cv_split(_charge(t, v, i))
        assert split.t_cc == pytest.approx(3000.0, abs=1e-9)
        assert split.t_cv == pytest.approx(6000.0, abs=1e-9)
        assert split.cc_reached and split.cv_reached

    def test_record_starting_at_cutoff(self):
        t = np.arange(0.0, 1000.0, 100.0)
        split = cc_cv_split(_charge(t, np.full(len(t), 4.2), np.full(len(t), 1.5)))
        assert split.t_cc == 0.0

    def test_current_never_below_cutoff(self):
        t = np.arange(0.0, 1000.0, 100.0)
        v = np.linspace(4.0, 4.3, len(t))
        split = cc_cv_split(_charge(t, v, np.full(len(t), 1.5)))
        assert not split.cv_reached
        assert split.t_cv == pytest.approx(t[-1] - split.t_cc)

    def test_rejects_discharge(self):
        rec = _discharge([0.0, 10.0, 20.0], [4.0, 3.9, 3.8])
        with pytest.raises(ValidationError):
            cc_cv_split(rec)


class TestExtractCycle:
    def test_temperature_order_statistics(self):
        charge, discharge = make_pair(1, temps=[20.0, 22.0, 24.0])
        fv = extract_cycle_features(charge, discharge)
        d = fv.as_dict()
        assert d["F9"] == 24.0 and d["F13"] == 20.0 and d["F10"] == 22.0

    def test_odd_median(self):
        charge, discharge = make_pair(1, temps=[20.0, 22.0, 24.0])
        discharge = replace(discharge, v_load=np.array([3.9, 3.7, 3.5]))
        fv = extract_cycle_features(charge, discharge)
        assert fv.as_dict()["F3"] == 3.7

    def test_even_median_mid_average(self):
        charge, discharge = make_pair(1, temps=[20.0, 21.0, 22.0, 23.0])
        discharge = replace(discharge, v_load=np.array([3.8, 3.6, 3.4, 3.2]))
        fv = extract_cycle_features(charge, discharge)
        assert fv.as_dict()["F3"] == 3.5

    def test_not_computable_flagged_not_fatal(self):
        charge, discharge = make_pair(1)
        discharge = replace(discharge, v_measured=np.full(len(discharge.t), 3.7))
        fv = extract_cycle_features(charge, discharge)
        assert np.isnan(fv.values[3])  # F4 skew of constant voltage
        assert "F4" in fv.flags and "variance" in fv.flags["F4"]
        assert np.isfinite(fv.values[0])  # rest of the vector intact

    def test_f20_is_duration(self, twin5):
        charge, discharge = twin5.cycles[0]
        fv = extract_cycle_features(charge, discharge)
        assert fv.as_dict()["F20"] == discharge.t[-1]

    def test_slope_truncation_flagged(self):
        charge, _ = make_pair(1)
        t = np.arange(0.0, 900.0, 10.0)  # ends before the 1000/1500 s windows
        discharge = _discharge(t, 4.0 - 1e-4 * t)
        fv = extract_cycle_features(charge, discharge)
        assert "F7" in fv.flags and "truncated" in fv.flags["F7"]
        assert np.isfinite(fv.as_dict()["F7"])


class TestFeatureTable:
    def test_shape_two_cycles(self):
        ds = make_dataset([1.8, 1.7])
        table = extract_feature_table(ds)
        assert table.values.shape == (2, 20)
        assert table.feature_ids == FEATURE_IDS

    def test_twin_alignment(self, twin5):
        table = extract_feature_table(twin5)
        soh = compute_soh(twin5)
        assert len(table) == len(soh) == 168
        assert np.array_equal(table.cycle_index, soh.cycle_index)

    def test_f18_decreases_over_life(self, twin5):
        # rank correlation with cycle index is negative (CC time shrinks)
        f18 = extract_feature_table(twin5).column("F18")
        ranks = np.argsort(np.argsort(f18)).astype(float)
        idx = np.arange(len(f18), dtype=float)
        assert pearson_correlation(idx, ranks) < 0

    def test_csv_roundtrip_exact(self, tmp_path, small_cell):
        table = extract_feature_table(small_cell)
        soh = compute_soh(small_cell)
        p = tmp_path / "features.csv"
        save_feature_csv(table, soh, p)
        t2, s2 = load_feature_csv(p)
        assert np.array_equal(table.values, t2.values)
        assert np.array_equal(soh.soh, s2.soh)
        assert np.array_equal(table.cycle_index, t2.cycle_index)

    def test_restrict_orders_columns(self, small_cell):
        table = extract_feature_table(small_cell)
        sub = table.restrict(["F18", "F2"])
        assert sub.feature_ids == ["F18", "F2"]
        assert np.array_equal(sub.values[:, 0], table.column("F18"))
        assert np.array_equal(sub.values[:, 1], table.column("F2"))
