"""Joint event/censoring selection through state occupancies and the
censoring-free state Brier score."""

import inspect
import json

import numpy as np
import pytest

from survstack.data import assign_folds, make_grid, simulate_synthetic
from survstack.errors import LearnerError, ValidationError
from survstack.learners import LearnerSpec, fit_learner
from survstack.states import (
    ObservedStatePath,
    PairRiskTable,
    StateOccupancy,
    StatePredictor,
    _reseed_for_role,
    brier_states,
    cross_validate_cumhaz,
    integrated_brier,
    pair_ibs,
    pair_risk_table,
    run_state_learner,
    select_pair,
    state_occupancy,
)


# ---------------------------------------------------------------------------
# State paths and occupancies
# ---------------------------------------------------------------------------

class TestObservedStatePath:
    def test_right_continuous_jump(self):
        path = ObservedStatePath(time=np.array([1.0, 2.0]),
                                 event=np.array([1, 0]))
        states = path.state_at([0.5, 1.0, 1.5, 2.0])
        assert states[0].tolist() == [0, 1, 1, 1]   # event -> +1 at T
        assert states[1].tolist() == [0, 0, 0, -1]  # censoring -> -1 at T


class TestStateOccupancy:
    def test_hand_single_increment(self):
        # Lambda jumps to 0.1 at the first grid point, no censoring:
        # F(t,0) = exp(-0.1), F(t,1) = 0.1 -- the exponential form for
        # state 0 leaves a small positive gap in the state sum.
        grid = make_grid(1.0, 2)
        occ = state_occupancy([0.1, 0.1], [0.0, 0.0], grid)
        assert occ.at_risk[0, 0] == pytest.approx(np.exp(-0.1), abs=1e-15)
        assert occ.event[0, 0] == pytest.approx(0.1, abs=1e-15)
        assert occ.censored[0, 0] == 0.0
        assert occ.state_sum_gap() == pytest.approx(
            abs(np.exp(-0.1) + 0.1 - 1.0), abs=1e-15)

    def test_zero_hazards_stay_at_risk(self):
        grid = make_grid(1.0, 3)
        occ = state_occupancy(np.zeros(3), np.zeros(3), grid)
        assert np.all(occ.at_risk == 1.0)
        assert np.all(occ.event == 0.0) and np.all(occ.censored == 0.0)
        assert occ.state_sum_gap() == 0.0

    def test_event_censoring_symmetry(self):
        grid = make_grid(2.0, 4)
        lam = np.array([0.1, 0.3, 0.5, 0.6])
        a = state_occupancy(lam, np.zeros(4), grid)
        b = state_occupancy(np.zeros(4), lam, grid)
        assert np.array_equal(a.event, b.censored)
        assert np.array_equal(a.at_risk, b.at_risk)

    def test_decreasing_cumhaz_names_the_learner(self):
        grid = make_grid(1.0, 2)
        with pytest.raises(LearnerError, match="my_model"):
            state_occupancy([0.2, 0.1], [0.0, 0.0], grid,
                            labels=("my_model", "cens"))

    def test_gap_shrinks_on_a_finer_grid(self):
        # smooth Weibull-style hazards: the exp-vs-sum discrepancy is a
        # discretization artifact and must shrink with the mesh
        def gap(v):
            grid = make_grid(2.0, v)
            lam = (grid.points / 1.5) ** 1.3
            gam = (grid.points / 2.5) ** 0.9
            return state_occupancy(lam, gam, grid).state_sum_gap()

        assert gap(200) < gap(20)
        assert gap(200) < 0.02

    def test_occupancy_validation(self):
        grid = make_grid(1.0, 2)
        with pytest.raises(ValidationError, match="non-increasing"):
            StateOccupancy(grid=grid,
                           at_risk=np.array([[0.5, 0.9]]),
                           event=np.zeros((1, 2)),
                           censored=np.zeros((1, 2)))


# ---------------------------------------------------------------------------
# State Brier score
# ---------------------------------------------------------------------------

class TestBrierStates:
    def test_signature_has_no_censoring_input(self):
        # the whole point of the score: no weights, no censoring model
        params = list(inspect.signature(brier_states).parameters)
        assert params == ["occupancy", "path", "t"]
        assert not any("weight" in p or "censor" in p for p in params)

    def test_perfect_prediction_scores_zero(self):
        grid = make_grid(1.0, 2)
        occ = StateOccupancy(grid=grid,
                             at_risk=np.array([[0.0, 0.0]]),
                             event=np.array([[1.0, 1.0]]),
                             censored=np.zeros((1, 2)))
        path = ObservedStatePath(time=np.array([0.3]), event=np.array([1]))
        assert brier_states(occ, path, 0.5) == 0.0

    def test_uniform_prediction_scores_two_thirds(self):
        grid = make_grid(1.0, 2)
        third = np.full((3, 2), 1 / 3)
        occ = StateOccupancy(grid=grid, at_risk=third, event=third,
                             censored=third)
        path = ObservedStatePath(time=np.array([0.2, 0.8, 2.0]),
                                 event=np.array([1, 0, 1]))
        # any observed state: two misses of 1/9 and one of 4/9
        assert brier_states(occ, path, 1.0) == pytest.approx(2 / 3, abs=1e-12)

    def test_hand_sum_over_mixed_states(self):
        grid = make_grid(1.0, 2)
        occ = StateOccupancy(
            grid=grid,
            at_risk=np.array([[0.5, 0.4], [0.9, 0.8]]),
            event=np.array([[0.3, 0.4], [0.05, 0.1]]),
            censored=np.array([[0.1, 0.1], [0.02, 0.05]]),
        )
        path = ObservedStatePath(time=np.array([0.7, 2.0]),
                                 event=np.array([1, 1]))
        # at t=1: person 0 is in state 1, person 1 still at risk
        b0 = (0.4 - 0) ** 2 + (0.4 - 1) ** 2 + (0.1 - 0) ** 2
        b1 = (0.8 - 1) ** 2 + (0.1 - 0) ** 2 + (0.05 - 0) ** 2
        assert brier_states(occ, path, 1.0) == pytest.approx((b0 + b1) / 2,
                                                             abs=1e-15)

    def test_off_grid_time_rejected(self):
        grid = make_grid(1.0, 2)
        occ = state_occupancy(np.zeros(2), np.zeros(2), grid)
        path = ObservedStatePath(time=np.array([0.5]), event=np.array([1]))
        with pytest.raises(ValidationError, match="not a grid point"):
            brier_states(occ, path, 0.31)


class TestIntegratedBrier:
    def test_constant_score_integrates_to_horizon_times_c(self):
        grid = make_grid(2.0, 4)
        assert integrated_brier(np.full(4, 0.25), grid) == pytest.approx(
            0.5, abs=1e-15)

    def test_shape_must_match_grid(self):
        with pytest.raises(ValidationError, match="one score per grid point"):
            integrated_brier(np.ones(3), make_grid(2.0, 4))

    def test_pair_ibs_hand_value(self):
        grid = make_grid(1.0, 2)
        path = ObservedStatePath(time=np.array([0.75]), event=np.array([1]))
        out = pair_ibs([0.1, 0.1], [0.0, 0.0], path, fold_of=[1], n_folds=1,
                       grid=grid)
        e = np.exp(-0.1)
        b1 = (e - 1) ** 2 + 0.1 ** 2            # still at risk at t=0.5
        b2 = e ** 2 + (0.1 - 1) ** 2            # event reached by t=1
        assert out.tolist() == pytest.approx([0.5 * (b1 + b2)], abs=1e-12)


# ---------------------------------------------------------------------------
# Pair selection
# ---------------------------------------------------------------------------

class TestSelectPair:
    def _table(self, mean):
        mean = np.asarray(mean, dtype=float)
        return PairRiskTable(event_labels=("e0", "e1"),
                             censoring_labels=("c0", "c1"),
                             fold_ibs=mean[:, :, None],
                             mean_ibs=mean)

    def test_unique_minimum(self):
        pair, tie = select_pair(self._table([[0.3, 0.2], [0.4, 0.5]]))
        assert pair == ("e0", "c1") and tie is False

    def test_tie_takes_first_in_row_major_order(self):
        pair, tie = select_pair(self._table([[0.3, 0.1], [0.1, 0.5]]))
        assert pair == ("e0", "c1") and tie is True


# ---------------------------------------------------------------------------
# Cross-validated hazards
# ---------------------------------------------------------------------------

def _interaction_data(n=150, seed=4):
    d, _ = simulate_synthetic(n, "interaction", seed=seed)
    return d


class TestCrossValidateCumhaz:
    def test_hazards_fill_nonnegative(self):
        d = _interaction_data()
        grid = make_grid(float(np.quantile(d.time, 0.7)), 8)
        cv = cross_validate_cumhaz(
            d, [LearnerSpec("cox"), LearnerSpec("nelson_aalen")],
            [LearnerSpec("kaplan_meier", label="cens_km")],
            assign_folds(d, 3, seed=1), grid)
        assert cv.lambda_curves.shape == (len(d), 8, 2)
        assert not np.any(np.isnan(cv.lambda_curves))
        assert np.all(cv.lambda_curves >= 0)

    def test_marginal_rows_are_fold_constant(self):
        d = _interaction_data()
        grid = make_grid(float(np.quantile(d.time, 0.7)), 8)
        folds = assign_folds(d, 3, seed=1)
        cv = cross_validate_cumhaz(
            d, [LearnerSpec("nelson_aalen")],
            [LearnerSpec("kaplan_meier", label="cens_km")],
            folds, grid)
        for k in range(1, 4):
            rows = cv.lambda_curves[cv.individual_fold == k, :, 0]
            assert np.all(rows == rows[0])

    def test_cox_cumhaz_matches_neg_log_survival(self):
        d = _interaction_data()
        fit = fit_learner(LearnerSpec("cox"), d)
        t = np.linspace(0.1, float(np.quantile(d.time, 0.7)), 7)
        x = d.covariates[:10]
        assert np.max(np.abs(fit.predict_cumhaz(x, t)
                             + np.log(fit.predict_survival(x, t)))) < 1e-10


# ---------------------------------------------------------------------------
# End to end
# ---------------------------------------------------------------------------

class TestRunStateLearner:
    def _run(self, seed=3):
        d = _interaction_data(160, seed=7)
        pred, report = run_state_learner(
            d, [LearnerSpec("cox"), LearnerSpec("kaplan_meier")],
            [LearnerSpec("kaplan_meier", label="cens_km"),
             LearnerSpec("cox", label="cens_cox")],
            tau=float(np.quantile(d.time, 0.7)), grid_points=12, n_folds=3,
            seed=seed)
        return d, pred, report

    def test_reports_full_pair_table(self):
        _, pred, report = self._run()
        table = report["risk_table"]
        assert table["event_labels"] == ["cox", "kaplan_meier"]
        assert table["censoring_labels"] == ["cens_km", "cens_cox"]
        assert len(table["mean_ibs"]) == 2 and len(table["mean_ibs"][0]) == 2
        assert report["selected_event"] in ("cox", "kaplan_meier")

    def test_predictor_is_exp_of_selected_cumhaz(self):
        d, pred, report = self._run()
        t = np.linspace(0.1, report["horizon"], 6)
        x = d.covariates[:8]
        direct = np.exp(-pred.event_model.predict_cumhaz(x, t))
        assert np.allclose(pred.predict_survival(x, t), direct, atol=1e-12)
        # and the selected model is a fresh full-data fit
        refit = fit_learner(LearnerSpec(pred.event_model.family), d)
        if pred.event_model.family == "cox":
            assert refit.beta == pytest.approx(pred.event_model.beta, abs=1e-12)

    def test_deterministic_and_roundtrips(self):
        d, p1, r1 = self._run()
        _, p2, r2 = self._run()
        assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)
        payload = p1.to_dict()
        again = StatePredictor.from_dict(json.loads(json.dumps(payload)))
        assert json.dumps(again.to_dict(), sort_keys=True) == \
            json.dumps(payload, sort_keys=True)
        t = np.array([0.2, 0.5])
        assert np.array_equal(again.predict_survival(d.covariates[:4], t),
                              p1.predict_survival(d.covariates[:4], t))

    def test_risk_table_consistent_with_manual_scoring(self):
        d = _interaction_data(120, seed=9)
        grid = make_grid(float(np.quantile(d.time, 0.7)), 8)
        folds = assign_folds(d, 3, seed=2)
        cv = cross_validate_cumhaz(
            d, [LearnerSpec("cox")], [LearnerSpec("kaplan_meier")],
            folds, grid)
        table = pair_risk_table(cv, d)
        path = ObservedStatePath(time=d.time, event=d.event)
        manual = pair_ibs(cv.lambda_curves[:, :, 0], cv.gamma_curves[:, :, 0],
                          path, cv.individual_fold, 3, grid)
        assert table.fold_ibs[0, 0] == pytest.approx(manual, abs=1e-15)


class TestReseeding:
    def test_roles_get_distinct_streams(self):
        spec = LearnerSpec("survival_forest", hyperparameters={"seed": 0})
        ev = _reseed_for_role([spec], 42, "event")[0]
        ce = _reseed_for_role([spec], 42, "censoring")[0]
        assert ev.hyperparameters["seed"] != ce.hyperparameters["seed"]
        # learners with no seed hyperparameter pass through untouched
        km = LearnerSpec("kaplan_meier")
        assert _reseed_for_role([km], 42, "event")[0] == km
