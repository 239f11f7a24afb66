import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survstack import numerics
from survstack.errors import (
    DegenerateEnsembleError,
    NumericalError,
    ValidationError,
)

from ._oracles import central_difference, cox_partial_loglik, simplex_grid_min
from .conftest import make_dataset


# ---------------------------------------------------------------------------
# Nonnegative least squares
# ---------------------------------------------------------------------------

class TestNnls:
    def test_interior_solution_matches_lstsq(self):
        # When the unconstrained optimum is already nonnegative the two
        # solvers must agree.
        rng = np.random.default_rng(0)
        a = rng.normal(size=(30, 3))
        x_true = np.array([0.5, 1.2, 0.3])
        y = a @ x_true + 0.01 * rng.normal(size=30)
        sol = numerics.nnls(a, y)
        ref, *_ = np.linalg.lstsq(a, y, rcond=None)
        assert np.all(ref > 0)
        assert np.allclose(sol.coefficients, ref, atol=1e-10)

    def test_active_constraints_zeroed(self):
        a = np.array([[1.0, -1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([2.0, -1.0, 1.0])  # pushes coefficient 2 negative
        sol = numerics.nnls(a, y)
        assert sol.coefficients[1] == 0.0
        assert sol.coefficients[0] >= 0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_simplex_grid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(6, 3))
        y = rng.normal(size=6)
        sol = numerics.nnls(a, y)
        scale = float(sol.coefficients.sum())
        if scale == 0:
            r = y - 0.0
            assert sol.objective == pytest.approx(float(y @ y))
            return
        grid_best = simplex_grid_min(a, y, scale, step=0.01)
        # The lattice can't undercut the exact cone optimum...
        assert sol.objective <= grid_best + 1e-9
        # ...and must land within its own resolution of it: moving every
        # coordinate by < step/2 changes a quadratic by at most
        # lam_max * ||delta||^2 (gradient vanishes on the support).
        lam_max = float(np.linalg.eigvalsh(a.T @ a).max())
        resolution = lam_max * 3 * (0.005 * max(scale, 1.0)) ** 2 + 1e-9
        assert grid_best - sol.objective <= resolution

    def test_duplicate_columns_share_weight(self):
        rng = np.random.default_rng(5)
        col = rng.normal(size=20)
        a = np.column_stack([col, col, rng.normal(size=20)])
        y = 2 * col
        sol = numerics.nnls(a, y)
        assert sol.coefficients[0] + sol.coefficients[1] == pytest.approx(2.0, abs=1e-8)

    def test_weighted_equals_rescaled(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(25, 3))
        y = rng.normal(size=25)
        w = rng.uniform(0.5, 2.0, size=25)
        sw = np.sqrt(w)
        direct = numerics.nnls(a, y, weights=w)
        scaled = numerics.nnls(a * sw[:, None], y * sw)
        assert np.allclose(direct.coefficients, scaled.coefficients, atol=1e-10)

    def test_kkt_certificate_on_random_problems(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a = rng.normal(size=(15, 4))
            y = rng.normal(size=15)
            sol = numerics.nnls(a, y)
            grad = 2 * a.T @ (a @ sol.coefficients - y)
            assert np.all(sol.coefficients >= 0)
            # stationarity on the support, feasibility of the gradient off it
            assert np.max(np.abs(grad[sol.coefficients > 0])) < 1e-6 if \
                np.any(sol.coefficients > 0) else True
            assert np.min(grad[sol.coefficients == 0], initial=0.0) > -1e-6

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            numerics.nnls(np.ones((3, 2)), np.ones(4))


class TestSimplexNormalize:
    def test_scales_to_unit_sum(self):
        w = numerics.simplex_normalize(np.array([2.0, 6.0]))
        assert np.array_equal(w, [0.25, 0.75])

    def test_all_zero_raises(self):
        with pytest.raises(DegenerateEnsembleError):
            numerics.simplex_normalize(np.zeros(3))

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=8).filter(
        lambda v: sum(v) > 1e-12))
    @settings(max_examples=200, deadline=None)
    def test_output_on_simplex(self, values):
        w = numerics.simplex_normalize(np.asarray(values))
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# Logistic IRLS
# ---------------------------------------------------------------------------

class TestLogisticIrls:
    def test_intercept_only_hits_logit_exactly(self):
        y = np.array([1.0, 0, 0, 0])
        a = np.ones((4, 1))
        beta = numerics.logistic_irls(a, y)
        assert beta[0] == pytest.approx(np.log(0.25 / 0.75), abs=1e-10)

    def test_gradient_vanishes_at_solution(self):
        rng = np.random.default_rng(1)
        a = np.column_stack([np.ones(200), rng.normal(size=(200, 2))])
        eta = a @ np.array([-0.3, 0.8, -1.1])
        y = (rng.uniform(size=200) < 1 / (1 + np.exp(-eta))).astype(float)
        beta = numerics.logistic_irls(a, y)
        mu = 1 / (1 + np.exp(-(a @ beta)))
        assert np.max(np.abs(a.T @ (y - mu))) < 1e-8

    def test_separation_falls_back_to_ridge(self):
        a = np.column_stack([np.ones(10), np.arange(10.0)])
        y = (np.arange(10) >= 5).astype(float)  # perfectly separable
        with pytest.warns(RuntimeWarning, match="separat"):
            beta = numerics.logistic_irls(a, y)
        assert np.all(np.isfinite(beta))

    def test_offset_shifts_solution(self):
        rng = np.random.default_rng(3)
        a = np.ones((50, 1))
        y = (rng.uniform(size=50) < 0.4).astype(float)
        off = np.full(50, 0.7)
        b0 = numerics.logistic_irls(a, y)
        b1 = numerics.logistic_irls(a, y, offset=off)
        assert b0[0] == pytest.approx(b1[0] + 0.7, abs=1e-8)


# ---------------------------------------------------------------------------
# Cox partial likelihood machinery
# ---------------------------------------------------------------------------

def _cox_fixture():
    """n=8, one covariate, one tie pair; small enough to grid-search."""
    time = np.array([1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
    event = np.array([1, 1, 0, 1, 1, 0, 1, 0])
    x = np.array([[0.5], [-0.2], [1.0], [0.3], [-1.5], [0.8], [2.0], [-0.7]])
    return time, event, x


class TestCoxQuantities:
    def test_loglik_matches_hand_coded(self):
        time, event, x = _cox_fixture()
        for b in (-1.0, -0.3, 0.0, 0.4, 1.7):
            ll, _, _ = numerics.cox_quantities(time, event, x, np.array([b]))
            assert ll == pytest.approx(cox_partial_loglik(time, event, x, b),
                                       abs=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_score_matches_finite_differences(self, seed):
        time, event, x = _cox_fixture()
        rng = np.random.default_rng(seed)
        b = rng.uniform(-2, 2, size=1)
        _, score, _ = numerics.cox_quantities(time, event, x, b)
        fd = central_difference(
            lambda bb: cox_partial_loglik(time, event, x, bb), b)
        assert abs(score[0] - fd[0]) / max(abs(fd[0]), 1e-10) < 1e-5

    def test_information_is_negative_curvature(self):
        time, event, x = _cox_fixture()
        b = np.array([0.3])
        h = 1e-4
        ll = lambda bb: cox_partial_loglik(time, event, x, bb)
        curv = (ll(b + h) - 2 * ll(b) + ll(b - h)) / h ** 2
        _, _, info = numerics.cox_quantities(time, event, x, b)
        assert info[0, 0] == pytest.approx(-curv, rel=1e-4)


class TestNewtonCox:
    def test_matches_grid_maximizer(self):
        time, event, x = _cox_fixture()
        d = make_dataset(time, event, covariates=x)
        fit = numerics.newton_cox(d)
        grid = np.arange(-5.0, 5.0 + 1e-12, 1e-3)
        values = [cox_partial_loglik(time, event, x, b) for b in grid]
        b_grid = grid[int(np.argmax(values))]
        assert abs(fit.beta[0] - b_grid) < 2e-3

    def test_score_zero_at_optimum(self):
        d, _ = _simulated(200)
        fit = numerics.newton_cox(d)
        _, score, _ = numerics.cox_quantities(d.time, d.event, d.covariates,
                                              fit.beta)
        assert np.max(np.abs(score)) < 1e-6

    def test_constant_column_named(self):
        d = make_dataset([1, 2, 3, 4], [1, 1, 0, 1],
                         covariates=np.column_stack([np.ones(4), np.arange(4.0)]),
                         names=("flat", "ok"))
        with pytest.raises(ValidationError, match="flat"):
            numerics.newton_cox(d)

    def test_monotone_likelihood_detected(self):
        # Perfectly ordered covariate -> beta runs to infinity.  The small
        # scale matters: it forces the coefficient itself (not just the
        # linear predictor) past any finite bound before convergence.
        d = make_dataset([1, 2, 3, 4, 5, 6], [1, 1, 1, 1, 1, 1],
                         covariates=-np.arange(6.0) * 0.1)
        with pytest.raises(NumericalError, match="monotone"):
            numerics.newton_cox(d)

    def test_covariate_subset_by_name(self):
        d, _ = _simulated(150)
        fit = numerics.newton_cox(d, covariates=["x1"])
        assert fit.beta.shape == (1,)


def _simulated(n, seed=11):
    from survstack.data import simulate_synthetic

    return simulate_synthetic(n, "PH", seed=seed)


# ---------------------------------------------------------------------------
# Coordinate-descent Cox lasso
# ---------------------------------------------------------------------------

class TestCoxLasso:
    def test_unpenalized_matches_newton(self):
        d, _ = _simulated(150)
        newton = numerics.newton_cox(d)
        cd = numerics.coord_descent_cox_lasso(d, lam=0.0)
        assert np.max(np.abs(cd.beta - newton.beta)) < 1e-6

    def test_heavy_penalty_zeroes_everything(self):
        d, _ = _simulated(150)
        cd = numerics.coord_descent_cox_lasso(d, lam=1e4)
        assert np.array_equal(cd.beta, np.zeros_like(cd.beta))

    def test_path_is_monotone_in_sparsity(self):
        d, _ = _simulated(200)
        nonzeros = []
        for lam in (0.5, 0.1, 0.02, 0.0):
            cd = numerics.coord_descent_cox_lasso(d, lam=lam)
            nonzeros.append(int(np.sum(cd.beta != 0)))
        assert nonzeros == sorted(nonzeros)

    def test_cv_selects_and_is_deterministic(self):
        d, _ = _simulated(200)
        a = numerics.coord_descent_cox_lasso(d, seed=3)
        b = numerics.coord_descent_cox_lasso(d, seed=3)
        assert np.array_equal(a.beta, b.beta)
        assert np.any(a.beta != 0)

    def test_soft_threshold_stationarity(self):
        # KKT for the lasso, checked on the standardized scale where the
        # penalty actually applies: |mean-gradient| <= lam on zeroed
        # coordinates, == lam * sign elsewhere.  Chain rule: d/db_j of the
        # standardized likelihood is the raw-coordinate gradient / sd_j.
        d, _ = _simulated(200)
        lam = 0.05
        cd = numerics.coord_descent_cox_lasso(d, lam=lam)
        ll = lambda b: cox_partial_loglik(d.time, d.event,
                                          d.covariates - d.covariates.mean(0), b)
        sd = d.covariates.std(axis=0)
        grad = central_difference(ll, cd.beta, h=1e-5) / (len(d) * sd)
        for j in range(cd.beta.size):
            if cd.beta[j] == 0:
                assert abs(grad[j]) <= lam + 1e-3
            else:
                assert grad[j] - lam * np.sign(cd.beta[j]) == pytest.approx(
                    0.0, abs=1e-3)


class TestLogitStack:
    def test_recovers_noise_free_mixture(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(400, 2))
        eta = z @ np.array([0.7, -0.4])
        y = (rng.uniform(size=400) < 1 / (1 + np.exp(-eta))).astype(float)
        beta = numerics.constrained_logit_stack(z, y)
        assert beta.shape == (2,)
        mu = 1 / (1 + np.exp(-(z @ beta)))
        assert np.max(np.abs(z.T @ (y - mu))) < 1e-7

    def test_collinear_stack_warns_and_recovers(self):
        rng = np.random.default_rng(4)
        col = rng.normal(size=100)
        z = np.column_stack([col, col])
        y = (rng.uniform(size=100) < 0.5).astype(float)
        # the singular hessian is caught one level down, inside the solver
        with pytest.warns(RuntimeWarning, match="singular"):
            beta = numerics.constrained_logit_stack(z, y)
        assert np.all(np.isfinite(beta))
        # duplicated columns share the weight evenly
        assert beta[0] == pytest.approx(beta[1], abs=1e-8)
