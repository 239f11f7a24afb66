import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survstack.data import (
    SurvivalDataset,
    SyntheticTruth,
    assign_folds,
    discretize,
    load_dataset,
    make_grid,
    save_dataset,
    simulate_synthetic,
    survival_from_discrete_hazards,
)
from survstack.errors import ValidationError

from .conftest import make_dataset


class TestDatasetValidation:
    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValidationError):
            make_dataset([1.0, 0.0], [1, 1])

    def test_rejects_bad_event_codes(self):
        with pytest.raises(ValidationError):
            make_dataset([1.0, 2.0], [1, 2])

    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValidationError):
            SurvivalDataset(ids=("a", "a"), time=[1.0, 2.0], event=[1, 0],
                            covariates=np.zeros((2, 1)), covariate_names=("x",))

    def test_rejects_all_censored(self):
        with pytest.raises(ValidationError):
            make_dataset([1.0, 2.0], [0, 0])

    def test_subset_keeps_alignment(self):
        d = make_dataset([1, 2, 3], [1, 0, 1], covariates=[[1], [2], [3]])
        s = d.subset([2, 0])
        assert s.ids == ("i2", "i0")
        assert list(s.time) == [3.0, 1.0]
        assert s.covariates[0, 0] == 3.0


class TestCsvRoundTrip:
    def test_save_load_identity(self, tmp_path):
        d = make_dataset([1.5, 2.25, 3.125], [1, 0, 1],
                         covariates=[[0.1, -1], [2.5, 0], [3, 4]],
                         names=("age", "stage"))
        path = tmp_path / "d.csv"
        save_dataset(d, path)
        back = load_dataset(path)
        assert back.ids == d.ids
        assert np.array_equal(back.time, d.time)
        assert np.array_equal(back.event, d.event)
        assert np.array_equal(back.covariates, d.covariates)
        assert back.covariate_names == d.covariate_names

    def test_schema_remaps_columns(self, tmp_path):
        path = tmp_path / "odd.csv"
        path.write_text("pid,followup,dead,biomarker\np1,3.5,1,0.2\np2,1.0,0,0.9\n")
        d = load_dataset(path, schema={"id": "pid", "time": "followup",
                                       "event": "dead"})
        assert d.ids == ("p1", "p2")
        assert d.covariate_names == ("biomarker",)

    def test_bad_row_named_in_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,event,x\n2.0,1,0.5\n-1.0,0,0.3\n")
        with pytest.raises(ValidationError, match="row 3"):
            load_dataset(path)


class TestFolds:
    def test_deterministic_and_balanced(self):
        d = simulate_synthetic(103, "PH", seed=4)[0]
        f1 = assign_folds(d, 5, seed=9)
        f2 = assign_folds(d, 5, seed=9)
        assert f1.fold_of == f2.fold_of
        sizes = np.bincount([f1.fold_of[i] for i in d.ids])[1:]
        assert sizes.max() - sizes.min() <= 1

    def test_every_fold_gets_an_event(self):
        d = simulate_synthetic(60, "PH", seed=2)[0]
        f = assign_folds(d, 5, seed=0)
        fold_of = np.array([f.fold_of[i] for i in d.ids])
        for k in range(1, 6):
            assert d.event[fold_of == k].sum() >= 1

    def test_too_many_folds_rejected(self):
        d = make_dataset([1, 2, 3], [1, 1, 1])
        with pytest.raises(ValidationError):
            assign_folds(d, 4, seed=0)


class TestDiscretize:
    def test_hand_expansion(self):
        # horizon 4, m=4 -> unit periods. Exit in period floor(t-eps).
        d = make_dataset([1.0, 2.5, 4.0, 3.0], [1, 0, 1, 1])
        long = discretize(d, horizon=4.0, m=4)
        rows = {rid: [] for rid in d.ids}
        for rid, t, e in zip(long.ids, long.period, long.period_event):
            rows[rid].append((t, e))
        # t=1.0 lands on a boundary: exits in period 0 (closed right)
        assert rows["i0"] == [(0, 1)]
        assert rows["i1"] == [(0, 0), (1, 0), (2, 0)]  # censored: all zero
        assert rows["i2"] == [(0, 0), (1, 0), (2, 0), (3, 1)]
        assert rows["i3"] == [(0, 0), (1, 0), (2, 1)]

    def test_event_after_horizon_counts_as_survivor(self):
        d = make_dataset([5.0, 1.0], [1, 1])
        long = discretize(d, horizon=4.0, m=2)
        i0 = [e for rid, e in zip(long.ids, long.period_event) if rid == "i0"]
        assert sum(i0) == 0 and len(i0) == 2

    def test_quantile_scheme_needs_enough_events(self):
        d = make_dataset([1, 1, 2, 3], [1, 1, 0, 1])
        with pytest.raises(ValidationError, match="distinct event times"):
            discretize(d, horizon=3.0, m=4, scheme="event-quantile")


class TestProductLimit:
    def test_pinned_value(self):
        # (1-0.1)(1-0.2) = 0.72, representable exactly in binary? 0.9*0.8
        assert survival_from_discrete_hazards([0.1, 0.2]) == 0.9 * 0.8

    def test_empty_product_is_one(self):
        assert survival_from_discrete_hazards([], 0) == 1.0

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30))
    @settings(max_examples=1000, deadline=None)
    def test_monotone_in_horizon(self, hazards):
        values = [survival_from_discrete_hazards(hazards, k)
                  for k in range(len(hazards) + 1)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert all(0.0 <= v <= 1.0 for v in values)


class TestGrid:
    def test_points_cover_interval(self):
        g = make_grid(10.0, 100)
        assert len(g.points) == 100
        assert g.points[0] == pytest.approx(0.1)
        assert g.points[-1] == 10.0
        assert g.spacing == pytest.approx(0.1)

    def test_rejects_trivial_grid(self):
        with pytest.raises(ValidationError):
            make_grid(10.0, 1)


class TestSimulation:
    def test_seeded_reproducibility(self):
        a, _ = simulate_synthetic(50, "interaction", seed=3)
        b, _ = simulate_synthetic(50, "interaction", seed=3)
        assert np.array_equal(a.time, b.time)
        assert np.array_equal(a.covariates, b.covariates)

    def test_censoring_rate_roughly_nominal(self):
        d, _ = simulate_synthetic(4000, "PH", seed=1, censoring_rate=0.3)
        assert 0.2 < 1 - d.event.mean() < 0.4

    def test_zero_rate_disables_censoring(self):
        d, _ = simulate_synthetic(200, "PH", seed=1, censoring_rate=0.0)
        assert d.event.mean() == 1.0

    def test_truth_round_trips_through_json(self):
        _, truth = simulate_synthetic(10, "interaction", seed=8)
        back = SyntheticTruth.from_dict(json.loads(json.dumps(truth.to_dict())))
        x = np.array([[0.3, -1.0, 1.0]])
        t = np.linspace(0.5, 5, 7)
        assert np.array_equal(truth.survival(t, x), back.survival(t, x))

    def test_truth_survival_matches_empirical(self):
        # Monte Carlo check of the oracle on censor-free draws.
        d, truth = simulate_synthetic(20000, "PH", seed=5, censoring_rate=0.0)
        x0 = d.covariates[:1]
        t = np.array([float(np.median(d.time))])
        s_orc = truth.survival(t, d.covariates)
        empirical = (d.time[:, None] > t).mean(axis=0)
        assert abs(s_orc.mean(axis=0)[0] - empirical[0]) < 0.02
        assert s_orc.shape == (20000, 1)
        # rows follow x: a single covariate row gives a single curve
        assert truth.survival(np.linspace(0.1, 3, 5), x0).shape == (1, 5)
