"""Candidate survival learners behind one fitted-model contract.

Every learner fits on a training set and then emits conditional survival,
cumulative hazard, or discrete hazard curves at query times. Continuous
families train on a SurvivalDataset; discrete families train on the
person-period LongFormatDataset. Predictions are deterministic functions
of (fitted state, query) and models are immutable after fit.

target="censoring" estimates the censoring distribution G. Product-limit
families resolve ties at a shared observed time with events occurring
before censorings (the censoring risk set at u excludes the events at u);
other families simply flip the indicator.

Queries beyond the last training time carry the last fitted value forward
and emit a single RuntimeWarning per call.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np

from . import numerics
from .data import LongFormatDataset, SurvivalDataset
from .errors import LearnerError, ValidationError

__all__ = [
    "LearnerSpec",
    "FittedLearner",
    "fit_learner",
    "learner_from_dict",
    "FAMILY_HYPERPARAMETERS",
    "DISCRETE_FAMILIES",
]

FAMILY_HYPERPARAMETERS = {
    "kaplan_meier": {},
    "nelson_aalen": {},
    "cox": {"covariates": None},
    "cox_lasso": {"covariates": None, "lam": None, "seed": 0, "n_lambda": 50,
                  "cv_folds": 5},
    "weibull": {"covariates": None, "force_shape": None},
    "exponential": {"covariates": None},
    "discrete_hazard_glm": {"covariates": None, "ridge": 0.0},
    "discrete_mean": {},
    "survival_forest": {"covariates": None, "n_trees": 250, "mtry": None,
                        "min_node_size": 15, "max_depth": None, "seed": 0,
                        "bootstrap": True},
}

DISCRETE_FAMILIES = frozenset({"discrete_hazard_glm", "discrete_mean"})

_COVARIATE_FREE = frozenset({"kaplan_meier", "nelson_aalen", "discrete_mean"})


@dataclass(frozen=True)
class LearnerSpec:
    """A learner family plus its hyperparameters under a unique label."""

    family: str
    label: str = ""
    hyperparameters: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILY_HYPERPARAMETERS:
            raise ValidationError(
                f"unknown learner family {self.family!r}; "
                f"expected one of {sorted(FAMILY_HYPERPARAMETERS)}"
            )
        allowed = FAMILY_HYPERPARAMETERS[self.family]
        merged = dict(allowed)
        for key, value in dict(self.hyperparameters).items():
            if key not in allowed:
                raise ValidationError(
                    f"unknown hyperparameter {key!r} for family {self.family!r}"
                )
            merged[key] = value
        if self.family == "survival_forest":
            if int(merged["n_trees"]) < 1:
                raise ValidationError("forest needs n_trees >= 1")
            if int(merged["min_node_size"]) < 1:
                raise ValidationError("forest needs min_node_size >= 1")
            if merged["mtry"] is not None and int(merged["mtry"]) < 1:
                raise ValidationError("forest mtry must be >= 1")
        object.__setattr__(self, "hyperparameters", MappingProxyType(merged))
        if not self.label:
            object.__setattr__(self, "label", self.family)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "label": self.label,
            "hyperparameters": {k: v for k, v in self.hyperparameters.items()},
        }

    @staticmethod
    def from_dict(payload: dict) -> "LearnerSpec":
        return LearnerSpec(
            family=payload["family"],
            label=payload.get("label", ""),
            hyperparameters=payload.get("hyperparameters", {}),
        )


def _covariate_columns(names, subset):
    names = list(names)
    if subset is None:
        return list(range(len(names)))
    idx = []
    for c in subset:
        if isinstance(c, str):
            if c not in names:
                raise ValidationError(f"unknown covariate {c!r}")
            idx.append(names.index(c))
        else:
            idx.append(int(c))
    if not idx:
        raise ValidationError("covariate subset is empty")
    return idx


class FittedLearner:
    """Shared prediction surface for all fitted families.

    Subclasses implement ``_survival`` (or ``_cumhaz``) on clamped times;
    this base applies the support clamp, the carry-forward warning, and
    the [0, 1] / monotone contracts.
    """

    def __init__(self, spec: LearnerSpec, target: str, support_end: float,
                 train_n: int, train_events: int):
        self.spec = spec
        self.target = target
        self.support_end = float(support_end)
        self.train_n = int(train_n)
        self.train_events = int(train_events)

    @property
    def family(self) -> str:
        return self.spec.family

    @property
    def label(self) -> str:
        return self.spec.label

    # -- prediction surface -------------------------------------------------
    def predict_survival(self, covariates, times) -> np.ndarray:
        x = self._as_matrix(covariates)
        t = self._clamped(times)
        out = np.clip(self._survival(x, t), 0.0, 1.0)
        return out

    def predict_cumhaz(self, covariates, times) -> np.ndarray:
        x = self._as_matrix(covariates)
        t = self._clamped(times)
        return self._cumhaz(x, t)

    def predict_survival_at(self, covariates, times_per_row) -> np.ndarray:
        """S(t_i | x_i) for one query time per row."""
        x = self._as_matrix(covariates)
        t = np.asarray(times_per_row, dtype=float)
        if t.shape != (x.shape[0],):
            raise ValidationError("need exactly one query time per row")
        uniq, inv = np.unique(t, return_inverse=True)
        grid = self.predict_survival(x, uniq)
        return grid[np.arange(x.shape[0]), inv]

    def predict_discrete_hazard(self, long: LongFormatDataset) -> np.ndarray:
        raise LearnerError(
            f"family {self.family!r} does not produce discrete hazards"
        )

    def predict_hazard_grid(self, covariates) -> np.ndarray:
        raise LearnerError(
            f"family {self.family!r} does not produce discrete hazards"
        )

    # -- family internals ---------------------------------------------------
    def _survival(self, x, t) -> np.ndarray:
        return np.exp(-self._cumhaz(x, t))

    def _cumhaz(self, x, t) -> np.ndarray:
        s = np.clip(self._survival(x, t), 1e-12, 1.0)
        return -np.log(s)

    def _as_matrix(self, covariates) -> np.ndarray:
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        if x.ndim != 2:
            raise ValidationError("covariates must be a 2-d array")
        return x

    def _clamped(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        if t.ndim != 1:
            t = t.reshape(-1)
        if np.any(t > self.support_end + 1e-12):
            warnings.warn(
                f"{self.label}: query beyond fitted support "
                f"({self.support_end:g}); carrying last value forward",
                RuntimeWarning,
                stacklevel=3,
            )
            t = np.minimum(t, self.support_end)
        return t

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "spec": self.spec.to_dict(),
            "target": self.target,
            "support_end": self.support_end,
            "train_n": self.train_n,
            "train_events": self.train_events,
            "params": self._params_dict(),
        }

    def _params_dict(self) -> dict:
        raise NotImplementedError

    def _base_kwargs(self):
        return dict(
            target=self.target,
            support_end=self.support_end,
            train_n=self.train_n,
            train_events=self.train_events,
        )


def _restore_base(cls, payload):
    return dict(
        spec=LearnerSpec.from_dict(payload["spec"]),
        target=payload["target"],
        support_end=payload["support_end"],
        train_n=payload["train_n"],
        train_events=payload["train_events"],
    )


# ---------------------------------------------------------------------------
# Marginal product-limit families
# ---------------------------------------------------------------------------

def _grouped_counts(time, event):
    """Distinct observed times with event and censoring counts and risk sets."""
    order = np.argsort(time, kind="mergesort")
    t_s, e_s = time[order], event[order]
    times, starts = np.unique(t_s, return_index=True)
    d = np.add.reduceat(e_s, starts)
    c = np.add.reduceat(1 - e_s, starts)
    n_at = np.add.reduceat(np.ones_like(e_s), starts)
    y = np.cumsum(n_at[::-1])[::-1]  # at risk: T-tilde >= u
    return times, d.astype(float), c.astype(float), y.astype(float)


def _marginal_hazards(time, event, target):
    times, d, c, y = _grouped_counts(time, event)
    if target == "event":
        hazard = d / y
    else:
        # Events precede censorings at a tied time, so the censoring risk
        # set at u excludes the events at u.
        denom = y - d
        hazard = np.divide(c, denom, out=np.zeros_like(c), where=denom > 0)
    return times, hazard


class _StepCurveLearner(FittedLearner):
    """Covariate-free learner defined by a right-continuous step curve."""

    def __init__(self, spec, times, values, **kw):
        super().__init__(spec, **kw)
        self.step_times = np.asarray(times, dtype=float)
        self.step_values = np.asarray(values, dtype=float)

    def _step_at(self, t):
        idx = np.searchsorted(self.step_times, t, side="right")
        return np.concatenate([[self._start_value], self.step_values])[idx]

    def _params_dict(self):
        return {
            "step_times": self.step_times.tolist(),
            "step_values": self.step_values.tolist(),
        }


class FittedKaplanMeier(_StepCurveLearner):
    _start_value = 1.0

    def _survival(self, x, t):
        return np.tile(self._step_at(t), (x.shape[0], 1))

    @classmethod
    def _from_dict(cls, payload):
        p = payload["params"]
        return cls(times=p["step_times"], values=p["step_values"],
                   **_restore_base(cls, payload))


class FittedNelsonAalen(_StepCurveLearner):
    _start_value = 0.0

    def _cumhaz(self, x, t):
        return np.tile(self._step_at(t), (x.shape[0], 1))

    def _survival(self, x, t):
        return np.exp(-self._cumhaz(x, t))

    @classmethod
    def _from_dict(cls, payload):
        p = payload["params"]
        return cls(times=p["step_times"], values=p["step_values"],
                   **_restore_base(cls, payload))


def _fit_kaplan_meier(spec, data, target):
    times, hazard = _marginal_hazards(data.time, data.event, target)
    survival = np.cumprod(1.0 - hazard)
    return FittedKaplanMeier(
        spec, times, survival,
        target=target, support_end=float(data.time.max()),
        train_n=len(data), train_events=data.n_events,
    )


def _fit_nelson_aalen(spec, data, target):
    times, hazard = _marginal_hazards(data.time, data.event, target)
    cumhaz = np.cumsum(hazard)
    return FittedNelsonAalen(
        spec, times, cumhaz,
        target=target, support_end=float(data.time.max()),
        train_n=len(data), train_events=data.n_events,
    )


# ---------------------------------------------------------------------------
# Semiparametric families (Cox, Cox lasso)
# ---------------------------------------------------------------------------

def _flip_for_censoring(data: SurvivalDataset) -> SurvivalDataset:
    try:
        return SurvivalDataset(
            ids=data.ids,
            time=data.time,
            event=1 - data.event,
            covariates=data.covariates,
            covariate_names=data.covariate_names,
        )
    except ValidationError:
        raise ValidationError("no censoring occurrences in training data")


class _CoxLikeLearner(FittedLearner):
    def __init__(self, spec, beta, means, baseline_times, baseline_cumhaz,
                 columns, **kw):
        super().__init__(spec, **kw)
        self.beta = np.asarray(beta, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.baseline_times = np.asarray(baseline_times, dtype=float)
        self.baseline_cumhaz = np.asarray(baseline_cumhaz, dtype=float)
        self.columns = list(columns)

    def _cumhaz(self, x, t):
        xc = x[:, self.columns] - self.means
        idx = np.searchsorted(self.baseline_times, t, side="right")
        base = np.concatenate([[0.0], self.baseline_cumhaz])[idx]
        return np.exp(xc @ self.beta)[:, None] * base[None, :]

    def _params_dict(self):
        return {
            "beta": self.beta.tolist(),
            "means": self.means.tolist(),
            "baseline_times": self.baseline_times.tolist(),
            "baseline_cumhaz": self.baseline_cumhaz.tolist(),
            "columns": self.columns,
        }

    @classmethod
    def _from_dict(cls, payload):
        p = payload["params"]
        return cls(beta=p["beta"], means=p["means"],
                   baseline_times=p["baseline_times"],
                   baseline_cumhaz=p["baseline_cumhaz"],
                   columns=p["columns"], **_restore_base(cls, payload))


class FittedCox(_CoxLikeLearner):
    pass


class FittedCoxLasso(_CoxLikeLearner):
    pass


def _fit_cox(spec, data, target):
    train = data if target == "event" else _flip_for_censoring(data)
    subset = spec.hyperparameters["covariates"]
    cols = _covariate_columns(data.covariate_names, subset)
    fit = numerics.newton_cox(train, covariates=cols)
    return FittedCox(
        spec, fit.beta, fit.means, fit.baseline_times, fit.baseline_cumhaz,
        cols, target=target, support_end=float(data.time.max()),
        train_n=len(data), train_events=data.n_events,
    )


def _fit_cox_lasso(spec, data, target):
    train = data if target == "event" else _flip_for_censoring(data)
    hp = spec.hyperparameters
    cols = _covariate_columns(data.covariate_names, hp["covariates"])
    fit = numerics.coord_descent_cox_lasso(
        train, lam=hp["lam"], covariates=cols, seed=int(hp["seed"]),
        n_lambda=int(hp["n_lambda"]), cv_folds=int(hp["cv_folds"]),
    )
    return FittedCoxLasso(
        spec, fit.beta, fit.means, fit.baseline_times, fit.baseline_cumhaz,
        cols, target=target, support_end=float(data.time.max()),
        train_n=len(data), train_events=data.n_events,
    )


# ---------------------------------------------------------------------------
# Parametric families (Weibull, Exponential)
# ---------------------------------------------------------------------------

def _weibull_mle(time, event, xc, fix_shape, max_iter=200):
    """Maximize the censored Weibull proportional-hazards likelihood.

    Parameters are (log shape, log scale, beta); fix_shape pins shape = 1
    (the exponential family). Newton with step-halving on the full
    likelihood; analytic gradient and Hessian.
    """
    n, p = xc.shape
    logt = np.log(time)
    events = event.astype(float)

    a = 0.0  # log shape
    b = float(np.log(time.mean() / max(events.mean(), 1e-12)))
    beta = np.zeros(p)

    # l = sum delta*(a + k*u + eta) - sum w up to the parameter-free
    # -sum delta*log t term, with u = log t - b and w = (t/scale)^k e^eta.
    def loglik(a_, b_, beta_):
        k = np.exp(a_)
        u = logt - b_
        eta = xc @ beta_
        w = np.exp(np.clip(k * u + eta, -700, 700))
        return float(np.sum(events * (a_ + k * u + eta)) - np.sum(w))

    theta_free = ([] if fix_shape else [0]) + [1] + list(range(2, 2 + p))
    current = loglik(a, b, beta)
    for _ in range(max_iter):
        k = np.exp(a)
        u = logt - b
        eta = xc @ beta
        w = np.exp(np.clip(k * u + eta, -700, 700))

        g_a = float(np.sum(events * (1.0 + k * u) - w * k * u))
        g_b = float(k * np.sum(w - events))
        g_beta = xc.T @ (events - w)
        grad_full = np.concatenate([[g_a, g_b], g_beta])

        h_aa = float(np.sum(k * u * (events - w)) - np.sum(w * (k * u) ** 2))
        h_ab = float(k * np.sum(w - events) + k * np.sum(w * k * u))
        h_a_beta = -(xc.T @ (w * k * u))
        h_bb = float(-(k ** 2) * np.sum(w))
        h_b_beta = k * (xc.T @ w)
        h_bb_mat = -(xc * w[:, None]).T @ xc

        hess = np.zeros((2 + p, 2 + p))
        hess[0, 0] = h_aa
        hess[0, 1] = hess[1, 0] = h_ab
        hess[0, 2:] = hess[2:, 0] = h_a_beta
        hess[1, 1] = h_bb
        hess[1, 2:] = hess[2:, 1] = h_b_beta
        hess[2:, 2:] = h_bb_mat

        free = theta_free
        grad = grad_full[free]
        if float(np.max(np.abs(grad))) < numerics.GRADIENT_TOL:
            break
        sub = hess[np.ix_(free, free)]
        try:
            step = np.linalg.solve(-sub, grad)
        except np.linalg.LinAlgError:
            raise LearnerError("singular information in parametric fit")
        scale = 1.0
        for _ in range(40):
            trial = np.concatenate([[a, b], beta])
            trial[free] = trial[free] + scale * step
            cand = loglik(trial[0], trial[1], trial[2:])
            if cand >= current - 1e-12:
                a, b, beta = float(trial[0]), float(trial[1]), trial[2:]
                current = cand
                break
            scale *= 0.5
        else:
            raise LearnerError("parametric likelihood failed to improve")
    else:
        raise LearnerError("parametric fit did not converge")
    return np.exp(a), np.exp(b), beta


class FittedWeibull(FittedLearner):
    def __init__(self, spec, shape, scale, beta, means, columns, **kw):
        super().__init__(spec, **kw)
        self.shape = float(shape)
        self.scale = float(scale)
        self.beta = np.asarray(beta, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.columns = list(columns)

    def _cumhaz(self, x, t):
        xc = x[:, self.columns] - self.means
        rel = np.exp(xc @ self.beta)
        base = (np.maximum(t, 0.0) / self.scale) ** self.shape
        return rel[:, None] * base[None, :]

    def _params_dict(self):
        return {
            "shape": self.shape,
            "scale": self.scale,
            "beta": self.beta.tolist(),
            "means": self.means.tolist(),
            "columns": self.columns,
        }

    @classmethod
    def _from_dict(cls, payload):
        p = payload["params"]
        return cls(shape=p["shape"], scale=p["scale"], beta=p["beta"],
                   means=p["means"], columns=p["columns"],
                   **_restore_base(cls, payload))


class FittedExponential(FittedWeibull):
    pass


def _fit_parametric(spec, data, target, fix_shape):
    train = data if target == "event" else _flip_for_censoring(data)
    hp = spec.hyperparameters
    cols = _covariate_columns(data.covariate_names, hp["covariates"])
    x = data.covariates[:, cols]
    for j, cj in enumerate(cols):
        # same contract as the Cox fit: a flat column makes the
        # information singular, so reject it by name up front
        if np.ptp(x[:, j]) == 0:
            raise ValidationError(
                f"constant covariate column {data.covariate_names[cj]!r}"
            )
    means = x.mean(axis=0)
    forced = hp.get("force_shape")
    if forced is not None and abs(float(forced) - 1.0) > 1e-12:
        # pinning is only meaningful at 1 (the exponential law)
        raise ValidationError("force_shape only supports 1.0")
    shape, scale, beta = _weibull_mle(
        train.time, train.event, x - means,
        fix_shape=fix_shape or forced is not None,
    )
    cls = FittedExponential if fix_shape else FittedWeibull
    return cls(
        spec, shape, scale, beta, means, cols,
        target=target, support_end=float(data.time.max()),
        train_n=len(data), train_events=data.n_events,
    )


# ---------------------------------------------------------------------------
# Discrete-time families (person-period long format)
# ---------------------------------------------------------------------------

_MAX_DUMMY_PERIODS = 20


def _glm_design(period, x, n_periods):
    period = np.asarray(period, dtype=int)
    if n_periods <= _MAX_DUMMY_PERIODS:
        dummies = np.zeros((len(period), n_periods))
        dummies[np.arange(len(period)), period] = 1.0
        return np.hstack([dummies, x])
    tt = (period + 1.0) / n_periods
    return np.hstack([np.ones((len(period), 1)), tt[:, None], (tt ** 2)[:, None],
                      (tt ** 3)[:, None], x])


class FittedDiscreteGLM(FittedLearner):
    def __init__(self, spec, coef, columns, n_periods, edges, **kw):
        super().__init__(spec, **kw)
        self.coef = np.asarray(coef, dtype=float)
        self.columns = list(columns)
        self.n_periods = int(n_periods)
        self.edges = np.asarray(edges, dtype=float)

    def _hazard(self, period, x):
        design = _glm_design(period, x[:, self.columns], self.n_periods)
        eta = design @ self.coef
        return 1.0 / (1.0 + np.exp(-eta))

    def predict_discrete_hazard(self, long: LongFormatDataset) -> np.ndarray:
        return self._hazard(long.period, np.asarray(long.covariates, float))

    def predict_hazard_grid(self, covariates) -> np.ndarray:
        x = self._as_matrix(covariates)
        out = np.empty((x.shape[0], self.n_periods))
        for t in range(self.n_periods):
            out[:, t] = self._hazard(np.full(x.shape[0], t), x)
        return out

    def _survival(self, x, t):
        return _discrete_survival(self.predict_hazard_grid(x), self.edges, t)

    def _params_dict(self):
        return {
            "coef": self.coef.tolist(),
            "columns": self.columns,
            "n_periods": self.n_periods,
            "edges": self.edges.tolist(),
        }

    @classmethod
    def _from_dict(cls, payload):
        p = payload["params"]
        return cls(coef=p["coef"], columns=p["columns"],
                   n_periods=p["n_periods"], edges=p["edges"],
                   **_restore_base(cls, payload))


class FittedDiscreteMean(FittedLearner):
    def __init__(self, spec, hazard, edges, **kw):
        super().__init__(spec, **kw)
        self.hazard = np.asarray(hazard, dtype=float)
        self.edges = np.asarray(edges, dtype=float)
        self.n_periods = len(self.hazard)

    def predict_discrete_hazard(self, long: LongFormatDataset) -> np.ndarray:
        return self.hazard[np.asarray(long.period, dtype=int)]

    def predict_hazard_grid(self, covariates) -> np.ndarray:
        x = self._as_matrix(covariates)
        return np.tile(self.hazard, (x.shape[0], 1))

    def _survival(self, x, t):
        return _discrete_survival(self.predict_hazard_grid(x), self.edges, t)

    def _params_dict(self):
        return {"hazard": self.hazard.tolist(), "edges": self.edges.tolist()}

    @classmethod
    def _from_dict(cls, payload):
        p = payload["params"]
        return cls(hazard=p["hazard"], edges=p["edges"],
                   **_restore_base(cls, payload))


def _discrete_survival(hazard_grid, edges, t):
    """S(t|x) as the product of (1 - q) over periods completed by t."""
    # period l spans (edges[l], edges[l+1]]; it is completed once t >= its
    # upper edge.
    completed = np.searchsorted(edges[1:], t, side="right")
    surv_steps = np.cumprod(1.0 - hazard_grid, axis=1)
    padded = np.hstack([np.ones((hazard_grid.shape[0], 1)), surv_steps])
    return padded[:, completed]


def _fit_discrete_glm(spec, long, target):
    hp = spec.hyperparameters
    cols = _covariate_columns(long.covariate_names, hp["covariates"])
    design = _glm_design(long.period, long.covariates[:, cols], long.n_periods)
    coef = numerics.logistic_irls(design, long.period_event.astype(float),
                                  ridge=float(hp["ridge"]))
    return FittedDiscreteGLM(
        spec, coef, cols, long.n_periods, long.edges,
        target=target, support_end=float(long.edges[-1]),
        train_n=len(set(long.ids)), train_events=int(long.period_event.sum()),
    )


def _fit_discrete_mean(spec, long, target):
    m = long.n_periods
    hazard = np.zeros(m)
    period = np.asarray(long.period, dtype=int)
    outcome = long.period_event.astype(float)
    for t in range(m):
        rows = period == t
        if rows.any():
            hazard[t] = float(outcome[rows].mean())
    return FittedDiscreteMean(
        spec, hazard, long.edges,
        target=target, support_end=float(long.edges[-1]),
        train_n=len(set(long.ids)), train_events=int(outcome.sum()),
    )


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def fit_learner(spec: LearnerSpec, training, target: str = "event") -> FittedLearner:
    """Fit one candidate learner; target="censoring" estimates G."""
    if target not in ("event", "censoring"):
        raise ValidationError(f"target must be 'event' or 'censoring', got {target!r}")
    if spec.family in DISCRETE_FAMILIES:
        if not isinstance(training, LongFormatDataset):
            raise ValidationError(
                f"family {spec.family!r} requires person-period long format"
            )
        if target != "event":
            raise ValidationError(
                "discrete-hazard families model the event target only; "
                "estimate censoring on the continuous scale"
            )
        if int(training.period_event.sum()) < 1:
            raise ValidationError("no event occurrences in training data")
    else:
        if not isinstance(training, SurvivalDataset):
            raise ValidationError(
                f"family {spec.family!r} requires a SurvivalDataset"
            )
        occurrences = training.n_events if target == "event" \
            else len(training) - training.n_events
        # Product-limit curves are well-defined with zero occurrences (the
        # estimate is flat); regression families genuinely need them.
        if occurrences < 1 and spec.family not in ("kaplan_meier", "nelson_aalen"):
            raise ValidationError(f"no {target} occurrences in training data")

    if spec.family == "kaplan_meier":
        return _fit_kaplan_meier(spec, training, target)
    if spec.family == "nelson_aalen":
        return _fit_nelson_aalen(spec, training, target)
    if spec.family == "cox":
        return _fit_cox(spec, training, target)
    if spec.family == "cox_lasso":
        return _fit_cox_lasso(spec, training, target)
    if spec.family == "weibull":
        return _fit_parametric(spec, training, target, fix_shape=False)
    if spec.family == "exponential":
        return _fit_parametric(spec, training, target, fix_shape=True)
    if spec.family == "discrete_hazard_glm":
        return _fit_discrete_glm(spec, training, target)
    if spec.family == "discrete_mean":
        return _fit_discrete_mean(spec, training, target)
    if spec.family == "survival_forest":
        from .forest import fit_survival_forest

        return fit_survival_forest(spec, training, target)
    raise ValidationError(f"unknown learner family {spec.family!r}")


_CLASS_BY_FAMILY = {
    "kaplan_meier": FittedKaplanMeier,
    "nelson_aalen": FittedNelsonAalen,
    "cox": FittedCox,
    "cox_lasso": FittedCoxLasso,
    "weibull": FittedWeibull,
    "exponential": FittedExponential,
    "discrete_hazard_glm": FittedDiscreteGLM,
    "discrete_mean": FittedDiscreteMean,
}


def learner_from_dict(payload: dict) -> FittedLearner:
    family = payload["family"]
    if family == "survival_forest":
        from .forest import FittedSurvivalForest

        return FittedSurvivalForest._from_dict(payload)
    try:
        cls = _CLASS_BY_FAMILY[family]
    except KeyError:
        raise ValidationError(f"unknown learner family {family!r}")
    return cls._from_dict(payload)
