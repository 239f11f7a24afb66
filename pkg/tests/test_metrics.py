"""Horizon metrics: censoring weights, weighted Brier, concordance, AUC,
and the calibration table."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survstack.errors import ValidationError
from survstack.learners import LearnerSpec, fit_learner
from survstack.data import simulate_synthetic
from survstack.metrics import (
    MetricReport,
    auc_t,
    brier_ipcw,
    calibration_table,
    censoring_weights,
    compute_metrics,
    scaled_brier,
    uno_c,
)

from .conftest import make_dataset


# ---------------------------------------------------------------------------
# Brute-force references (independent O(n^2) implementations)
# ---------------------------------------------------------------------------

def _brute_uno(s, time, event, w, tau):
    num = den = 0.0
    for i in range(len(time)):
        if not (event[i] == 1 and time[i] <= tau):
            continue
        for j in range(len(time)):
            if time[j] <= time[i]:
                continue
            den += w[i] ** 2
            if s[i] < s[j]:
                num += w[i] ** 2
            elif s[i] == s[j]:
                num += 0.5 * w[i] ** 2
    return 100.0 * num / den


def _brute_auc(s, time, event, w, tau):
    num = den = 0.0
    for i in range(len(time)):
        if not (event[i] == 1 and time[i] <= tau):
            continue
        for j in range(len(time)):
            if time[j] <= tau:
                continue
            den += w[i] * w[j]
            if s[i] < s[j]:
                num += w[i] * w[j]
            elif s[i] == s[j]:
                num += 0.5 * w[i] * w[j]
    return 100.0 * num / den


# ---------------------------------------------------------------------------
# Censoring weights
# ---------------------------------------------------------------------------

class TestCensoringWeights:
    def test_hand_weights(self):
        # G-hat steps: 4/5 after the censoring at t=1, 8/15 after t=3
        d = make_dataset([1, 2, 3, 4, 5], [0, 1, 0, 1, 0])
        w = censoring_weights(d, 4.5)
        assert w.tolist() == pytest.approx([0.0, 1.25, 0.0, 1.875, 1.875],
                                           abs=1e-12)

    def test_no_censoring_gives_unit_weights(self):
        d = make_dataset([1, 2, 3, 4], [1, 1, 1, 1])
        assert censoring_weights(d, 2.5).tolist() == [1.0, 1.0, 1.0, 1.0]

    def test_horizon_beyond_censoring_support(self):
        d = make_dataset([1, 2, 3], [1, 1, 0])
        with pytest.raises(ValidationError, match="beyond support"):
            censoring_weights(d, 3.0)

    def test_nonpositive_horizon(self):
        d = make_dataset([1, 2], [1, 1])
        with pytest.raises(ValidationError, match="tau must be > 0"):
            censoring_weights(d, 0.0)

    def test_extreme_weights_are_capped(self):
        # 20 early censorings leave G-hat(20) = 1/21, so the lone survivor
        # would get weight 21
        d = make_dataset(list(range(1, 22)), [0] * 20 + [1])
        with pytest.warns(RuntimeWarning, match="capped"):
            w = censoring_weights(d, 20.5)
        assert w[-1] == 20.0
        assert np.all(w[:-1] == 0.0)


# ---------------------------------------------------------------------------
# Brier score
# ---------------------------------------------------------------------------

class TestBrier:
    def test_hand_value_on_censored_data(self):
        # weights [1, 0, 2]; residuals [s^2, -, (1-s)^2] at s = 2/3
        d = make_dataset([1, 2, 3], [1, 0, 1])
        w = censoring_weights(d, 2.5)
        s = np.full(3, 2 / 3)
        assert brier_ipcw(s, d, w, 2.5) == pytest.approx(2 / 9, abs=1e-15)

    def test_equals_plain_mse_without_censoring(self):
        d = make_dataset([1, 2, 3, 4], [1, 1, 1, 1])
        s = np.array([0.2, 0.9, 0.4, 0.7])
        w = censoring_weights(d, 2.5)
        alive = (d.time > 2.5).astype(float)
        assert abs(brier_ipcw(s, d, w, 2.5)
                   - np.mean((alive - s) ** 2)) < 1e-15

    def test_prediction_contract(self):
        d = make_dataset([1, 2, 3], [1, 0, 1])
        w = censoring_weights(d, 2.5)
        with pytest.raises(ValidationError, match="one prediction per"):
            brier_ipcw([0.5, 0.5], d, w, 2.5)
        with pytest.raises(ValidationError, match=r"\[0,1\]"):
            brier_ipcw([0.5, 1.2, 0.5], d, w, 2.5)

    def test_scaled_is_zero_at_the_km_prediction(self):
        # classic curve: S(2.5) = 2/3 -- predicting it scores exactly the
        # reference, so the improvement is zero
        d = make_dataset([1, 2, 3], [1, 0, 1])
        w = censoring_weights(d, 2.5)
        b = brier_ipcw(np.full(3, 2 / 3), d, w, 2.5)
        assert scaled_brier(b, d, w, 2.5) == pytest.approx(0.0, abs=1e-12)

    def test_scaled_positive_when_beating_km(self):
        d = make_dataset([1, 2, 8, 9], [1, 1, 1, 1])
        w = censoring_weights(d, 5.0)
        sharp = np.array([0.05, 0.05, 0.95, 0.95])
        b = brier_ipcw(sharp, d, w, 5.0)
        assert scaled_brier(b, d, w, 5.0) > 50.0


# ---------------------------------------------------------------------------
# Rank metrics
# ---------------------------------------------------------------------------

class TestUnoC:
    def test_hand_fraction(self):
        # 10 ordered pairs, 8 concordant
        d = make_dataset([1, 2, 3, 4, 5], [1, 1, 1, 1, 1])
        s = np.array([0.1, 0.4, 0.2, 0.3, 0.5])
        w = censoring_weights(d, 6.0)
        assert uno_c(s, d, w, 6.0) == pytest.approx(80.0)

    def test_perfect_reversed_and_constant(self):
        d = make_dataset([1, 2, 3, 4], [1, 1, 1, 1])
        w = censoring_weights(d, 5.0)
        perfect = np.array([0.1, 0.2, 0.3, 0.4])   # earliest = riskiest
        assert uno_c(perfect, d, w, 5.0) == 100.0
        assert uno_c(perfect[::-1], d, w, 5.0) == 0.0
        assert uno_c(np.full(4, 0.5), d, w, 5.0) == 50.0

    def test_requires_events_before_tau(self):
        d = make_dataset([5, 6, 7], [1, 1, 1])
        w = np.ones(3)
        with pytest.raises(ValidationError, match="no observed events"):
            uno_c([0.1, 0.2, 0.3], d, w, 2.0)

    def test_matches_brute_force_with_real_censoring(self):
        d, _ = simulate_synthetic(120, "interaction", seed=2)
        train, _ = simulate_synthetic(150, "interaction", seed=3)
        tau = float(np.quantile(d.time, 0.6))
        fit = fit_learner(LearnerSpec("cox"), train)
        s = fit.predict_survival_at(d.covariates, np.full(len(d), tau))
        w = censoring_weights(d, tau)
        assert uno_c(s, d, w, tau) == pytest.approx(
            _brute_uno(s, d.time, d.event, w, tau), abs=1e-10)


class TestAucT:
    def test_hand_fraction(self):
        # four cases against one control at s = 0.3: credits 1, 0, 1, 0.5
        d = make_dataset([1, 2, 3, 4, 5], [1, 1, 1, 1, 1])
        s = np.array([0.1, 0.4, 0.2, 0.3, 0.3])
        w = censoring_weights(d, 4.5)
        assert auc_t(s, d, w, 4.5) == 62.5

    def test_requires_cases_and_controls(self):
        d = make_dataset([1, 2, 3], [1, 1, 1])
        w = np.ones(3)
        with pytest.raises(ValidationError, match="no controls"):
            auc_t([0.1, 0.2, 0.3], d, w, 4.0)
        d2 = make_dataset([1, 2, 3], [0, 0, 1])
        with pytest.raises(ValidationError, match="no cases"):
            auc_t([0.1, 0.2, 0.3], d2, np.ones(3), 0.5)

    def test_matches_brute_force_with_real_censoring(self):
        d, _ = simulate_synthetic(120, "interaction", seed=2)
        train, _ = simulate_synthetic(150, "interaction", seed=3)
        tau = float(np.quantile(d.time, 0.6))
        fit = fit_learner(LearnerSpec("cox"), train)
        s = fit.predict_survival_at(d.covariates, np.full(len(d), tau))
        w = censoring_weights(d, tau)
        assert auc_t(s, d, w, tau) == pytest.approx(
            _brute_auc(s, d.time, d.event, w, tau), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 1.0).map(lambda v: round(v, 3)),
                min_size=8, max_size=8))
def test_rank_metrics_invariant_under_monotone_transform(raw):
    d = make_dataset([1, 2, 3, 4, 5, 6, 7, 8], [1, 0, 1, 1, 0, 1, 1, 1])
    s = np.array(raw)
    w = censoring_weights(d, 6.5)
    assert uno_c(s ** 3, d, w, 6.5) == uno_c(s, d, w, 6.5)
    assert auc_t(s ** 3, d, w, 6.5) == auc_t(s, d, w, 6.5)
    assert 0.0 <= uno_c(s, d, w, 6.5) <= 100.0


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

class TestCalibration:
    def test_two_clean_groups(self):
        s = np.array([0.9, 0.8, 0.85, 0.2, 0.3, 0.25])
        d = make_dataset([10, 10, 10, 1, 2, 3], [1, 1, 1, 1, 1, 1])
        rows, merged = calibration_table(s, d, 5.0, bins=2)
        assert merged is False and len(rows) == 2
        low, high = rows
        assert low["mean_predicted"] == pytest.approx(0.15)
        assert low["observed"] == 0.0 and low["count"] == 3
        assert high["mean_predicted"] == pytest.approx(0.75)
        assert high["observed"] == 1.0 and high["count"] == 3
        assert low["risk_low"] == pytest.approx(0.1)
        assert high["risk_high"] == pytest.approx(0.8)

    def test_identical_predictions_collapse_to_one_group(self):
        d = make_dataset([1, 2, 3, 4], [1, 1, 0, 1])
        rows, merged = calibration_table(np.full(4, 0.6), d, 2.5, bins=10)
        assert merged is True
        assert len(rows) == 1 and rows[0]["count"] == 4

    def test_undersized_groups_fold_into_neighbors(self):
        s = np.array([0.9, 0.9, 0.9, 0.9, 0.1])
        d = make_dataset([1, 2, 3, 4, 5], [1, 1, 1, 1, 1])
        rows, merged = calibration_table(s, d, 3.5, bins=2)
        assert merged is True
        assert sum(r["count"] for r in rows) == 5
        assert all(r["count"] >= 2 for r in rows)

    def test_bins_must_be_positive(self):
        d = make_dataset([1, 2], [1, 1])
        with pytest.raises(ValidationError, match="bins"):
            calibration_table([0.5, 0.5], d, 1.5, bins=0)

    def test_large_sample_calibration_of_a_correct_model(self):
        train, _ = simulate_synthetic(1500, "PH", seed=11)
        test, _ = simulate_synthetic(4000, "PH", seed=12)
        tau = float(np.quantile(test.time, 0.6))
        fit = fit_learner(LearnerSpec("cox"), train)
        s = fit.predict_survival_at(test.covariates, np.full(len(test), tau))
        rows, _ = calibration_table(s, test, tau, bins=5)
        for row in rows:
            assert abs(row["mean_predicted"] - row["observed"]) < 0.05


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

class TestMetricReport:
    def test_bounds_are_enforced(self):
        ok = dict(brier=0.2, scaled_brier=-5.0, c_index=60.0, auc=55.0,
                  horizon=2.0, calibration=())
        MetricReport(**ok)  # negative scaled improvement is legitimate
        with pytest.raises(ValidationError, match="brier"):
            MetricReport(**{**ok, "brier": 1.4})
        with pytest.raises(ValidationError, match="c_index"):
            MetricReport(**{**ok, "c_index": 101.0})
        with pytest.raises(ValidationError, match="auc"):
            MetricReport(**{**ok, "auc": -0.1})

    def test_compute_metrics_end_to_end(self):
        test, _ = simulate_synthetic(250, "interaction", seed=5)
        train, _ = simulate_synthetic(250, "interaction", seed=6)
        tau = float(np.quantile(test.time, 0.6))
        fit = fit_learner(LearnerSpec("cox"), train)
        s = fit.predict_survival_at(test.covariates, np.full(len(test), tau))

        report = compute_metrics(s, test, tau, bins=4)
        again = compute_metrics(s, test, tau, bins=4)
        assert report.to_dict() == again.to_dict()
        assert json.dumps(report.to_dict())  # serializable as-is
        assert report.horizon == tau
        assert report.brier == brier_ipcw(s, test,
                                          censoring_weights(test, tau), tau)
        assert report.c_index > 50.0  # the model is informative
        assert sum(r["count"] for r in report.calibration) == len(test)

    def test_merged_rows_carry_the_flag(self):
        test = make_dataset([1, 2, 3, 4, 5], [1, 1, 0, 1, 1])
        report = compute_metrics(np.full(5, 0.5), test, 3.5, bins=3)
        assert all(row["merged"] is True for row in report.calibration)
