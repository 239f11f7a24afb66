"""Discrete-time survival super learner on person-period data.

Pipeline: discretize follow-up into periods, cross-validate discrete-hazard
learners on the long format, score them with one of three losses (IPCW
Brier at the horizon, pooled squared error, pooled Bernoulli likelihood),
then either select the single best learner or stack the library:

- l2:     nonnegative least squares of the period outcome on candidate
          hazards, weights normalized to the simplex
- loglik: logistic stack on logit-transformed hazards, unconstrained
- ipcw:   weighted nonnegative least squares of I(follow-up > horizon) on
          candidate survival probabilities, one row per eligible individual

The horizon-τ survival estimate comes from the product-limit identity
S(τ|x) = prod_t (1 - Q(t|x)) for hazard-based modes and from the direct
mixture of candidate survival curves for the IPCW mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .censoring import CensoringCurve, censoring_km
from .data import FoldAssignment, LongFormatDataset, SurvivalDataset, discretize
from .errors import (
    DegenerateEnsembleError,
    NumericalError,
    SurvStackError,
    ValidationError,
)
from .learners import LearnerSpec, fit_learner

__all__ = [
    "CvHazards",
    "CvRiskTable",
    "EnsembleWeights",
    "cross_validate",
    "loss_l2",
    "loss_loglik",
    "loss_ipcw",
    "build_risk_table",
    "select_best",
    "ensemble_l2",
    "ensemble_loglik",
    "ensemble_ipcw",
    "finalize",
    "DiscretePredictor",
    "run_discrete_super_learner",
]

HAZARD_CLIP = 1e-6
WEIGHT_CAP = 20.0
LOSSES = ("ipcw", "l2", "loglik")


@dataclass(frozen=True)
class CvHazards:
    """Cross-validated hazards for every person-period and every learner.

    ``rows`` aligns with the long data (at-risk person-periods); ``grid``
    carries the full per-individual hazard grid needed to build survival
    probabilities by the product-limit identity. Every prediction for an
    individual comes from a model fitted without that individual's fold.
    """

    long: LongFormatDataset
    labels: tuple
    rows: np.ndarray            # (n_rows, p)
    grid: np.ndarray            # (n_individuals, m, p)
    individual_ids: tuple
    row_fold: np.ndarray        # fold of each long row
    individual_fold: np.ndarray
    n_folds: int
    dropped: tuple = ()         # (label, fold, reason)

    def __post_init__(self):
        if self.rows.shape != (len(self.long.ids), len(self.labels)):
            raise ValidationError("cv hazard row matrix misaligned")
        if self.grid.shape != (len(self.individual_ids), self.long.n_periods,
                               len(self.labels)):
            raise ValidationError("cv hazard grid misaligned")
        if np.any(self.rows < 0) or np.any(self.rows > 1):
            raise ValidationError("hazards must lie in [0,1]")

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown learner label {label!r}")

    def survival_at_horizon(self) -> np.ndarray:
        """phi[i, j] = S_j(tau | x_i) via the product-limit identity."""
        return np.prod(1.0 - self.grid, axis=1)


@dataclass(frozen=True)
class CvRiskTable:
    """Per-learner, per-fold expected losses and their means."""

    loss: str
    labels: tuple
    fold_losses: np.ndarray  # (p, K)
    mean_losses: np.ndarray  # (p,)

    def __post_init__(self):
        if not np.all(np.isfinite(self.fold_losses)):
            raise NumericalError("non-finite cross-validated loss")
        recomputed = self.fold_losses.mean(axis=1)
        if np.max(np.abs(recomputed - self.mean_losses)) > 1e-12:
            raise ValidationError("mean losses must average the fold losses")

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "labels": list(self.labels),
            "fold_losses": {lab: self.fold_losses[j].tolist()
                            for j, lab in enumerate(self.labels)},
            "mean_losses": {lab: float(self.mean_losses[j])
                            for j, lab in enumerate(self.labels)},
        }


@dataclass(frozen=True)
class EnsembleWeights:
    """Stacking coefficients for one loss; simplex or unconstrained."""

    loss: str
    mode: str  # "simplex" | "unconstrained" | "selected"
    labels: tuple
    alpha: np.ndarray
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.alpha)):
            raise NumericalError("non-finite ensemble weights")
        if self.mode in ("simplex", "selected"):
            if np.any(self.alpha < 0) or abs(float(self.alpha.sum()) - 1.0) > 1e-9:
                raise ValidationError("simplex weights must be >= 0 and sum to 1")

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "mode": self.mode,
            "weights": {lab: float(self.alpha[j])
                        for j, lab in enumerate(self.labels)},
            "flags": dict(sorted(self.flags.items())),
        }


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def _individual_rows(long: LongFormatDataset):
    first_row = {}
    for pos, rid in enumerate(long.ids):
        if rid not in first_row:
            first_row[rid] = pos
    ids = tuple(first_row)
    x = long.covariates[[first_row[rid] for rid in ids]]
    return ids, x


def cross_validate(long: LongFormatDataset, specs, folds: FoldAssignment) -> CvHazards:
    """Fit every learner on each training split, predict the held-out fold.

    A learner that fails in any fold is dropped from the table entirely,
    with the failure recorded — never silently imputed.
    """
    specs = list(specs)
    if not specs:
        raise ValidationError("need at least one learner spec")
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ValidationError("learner labels must be unique")

    ids, x_ind = _individual_rows(long)
    id_pos = {rid: i for i, rid in enumerate(ids)}
    n_rows = len(long.ids)
    m = long.n_periods
    p = len(specs)

    rows = np.full((n_rows, p), np.nan)
    grid = np.full((len(ids), m, p), np.nan)
    row_fold = np.array([folds.fold_of[rid] for rid in long.ids], dtype=int)
    individual_fold = np.array([folds.fold_of[rid] for rid in ids], dtype=int)

    alive = [True] * p
    dropped = []
    for k in range(1, folds.K + 1):
        val_ids = [rid for rid in ids if folds.fold_of[rid] == k]
        train_ids = [rid for rid in ids if folds.fold_of[rid] != k]
        if set(val_ids) & set(train_ids):
            raise ValidationError("fold overlap between training and validation")
        train_long = long.subset_by_ids(train_ids)
        val_long = long.subset_by_ids(val_ids)
        val_row_mask = row_fold == k
        val_pos = [id_pos[rid] for rid in val_ids]
        x_val = x_ind[val_pos]

        for j, spec in enumerate(specs):
            if not alive[j]:
                continue
            try:
                model = fit_learner(spec, train_long, target="event")
                rows[val_row_mask, j] = model.predict_discrete_hazard(val_long)
                grid[val_pos, :, j] = model.predict_hazard_grid(x_val)
            except (SurvStackError, np.linalg.LinAlgError) as exc:
                alive[j] = False
                dropped.append((spec.label, k, f"{type(exc).__name__}: {exc}"))

    keep = [j for j in range(p) if alive[j]]
    if not keep:
        raise ValidationError("every learner failed during cross-validation")
    return CvHazards(
        long=long,
        labels=tuple(labels[j] for j in keep),
        rows=rows[:, keep],
        grid=grid[:, :, keep],
        individual_ids=ids,
        row_fold=row_fold,
        individual_fold=individual_fold,
        n_folds=folds.K,
        dropped=tuple(dropped),
    )


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def loss_l2(cv: CvHazards, fold: int, label: str) -> float:
    """Pooled squared error: sum over periods of the fold-average of
    (period outcome - hazard)^2 over individuals still at risk."""
    j = cv.index_of(label)
    mask = cv.row_fold == fold
    n_fold = int(np.sum(cv.individual_fold == fold))
    if n_fold == 0:
        raise ValidationError(f"empty fold {fold}")
    resid = cv.long.period_event[mask] - cv.rows[mask, j]
    return float(np.sum(resid ** 2) / n_fold)


def loss_loglik(cv: CvHazards, fold: int, label: str) -> float:
    """Negative mean Bernoulli log-likelihood over at-risk person-periods."""
    j = cv.index_of(label)
    mask = cv.row_fold == fold
    q = np.clip(cv.rows[mask, j], HAZARD_CLIP, 1.0 - HAZARD_CLIP)
    d = cv.long.period_event[mask]
    if q.size == 0:
        raise ValidationError(f"empty fold {fold}")
    return float(-np.mean(d * np.log(q) + (1.0 - d) * np.log(1.0 - q)))


def _ipcw_weights(time, event, tau, curve: CensoringCurve):
    """Per-individual IPCW weight for the horizon-tau Brier contrast.

    Events at or before tau weight by 1/G(T-), survivors past tau by
    1/G(tau); individuals censored by tau contribute nothing. Weights are
    capped at WEIGHT_CAP with a warning.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=int)
    is_event = (event == 1) & (time <= tau)
    is_survivor = time > tau
    w = np.zeros(len(time))
    g_left = curve.at_left(time)
    g_tau = float(curve.at(tau))
    with np.errstate(divide="ignore"):
        w[is_event] = np.where(g_left[is_event] > 0,
                               1.0 / np.maximum(g_left[is_event], 1e-300), np.inf)
        w[is_survivor] = np.inf if g_tau == 0 else 1.0 / g_tau
    capped = int(np.sum(w > WEIGHT_CAP))
    if capped:
        warnings.warn(
            f"{capped} censoring weight(s) exceeded {WEIGHT_CAP:g}; capped",
            RuntimeWarning,
            stacklevel=3,
        )
        w = np.minimum(w, WEIGHT_CAP)
    return w, is_event, is_survivor, capped


def _align_to_individuals(cv: CvHazards, dataset: SurvivalDataset):
    pos = {rid: i for i, rid in enumerate(dataset.ids)}
    try:
        idx = np.array([pos[rid] for rid in cv.individual_ids], dtype=int)
    except KeyError as missing:
        raise ValidationError(f"dataset is missing id {missing}")
    return dataset.time[idx], dataset.event[idx]


def loss_ipcw(cv: CvHazards, dataset: SurvivalDataset, fold: int, label: str,
              tau: float, curve: CensoringCurve | None = None) -> float:
    """Horizon-tau Brier score with inverse-censoring weights.

    The censoring curve defaults to a Kaplan-Meier estimate within the
    validation fold itself.
    """
    j = cv.index_of(label)
    time, event = _align_to_individuals(cv, dataset)
    sel = cv.individual_fold == fold
    if not sel.any():
        raise ValidationError(f"empty fold {fold}")
    t_k, e_k = time[sel], event[sel]
    if curve is None:
        curve = censoring_km(t_k, e_k)
    s_tau = cv.survival_at_horizon()[sel, j]
    w, is_event, is_survivor, _ = _ipcw_weights(t_k, e_k, tau, curve)
    contrib = np.zeros(len(t_k))
    contrib[is_event] = w[is_event] * s_tau[is_event] ** 2
    contrib[is_survivor] = w[is_survivor] * (1.0 - s_tau[is_survivor]) ** 2
    return float(contrib.sum() / len(t_k))


def build_risk_table(cv: CvHazards, loss: str, dataset: SurvivalDataset | None = None,
                     tau: float | None = None) -> CvRiskTable:
    if loss not in LOSSES:
        raise ValidationError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    if loss == "ipcw" and (dataset is None or tau is None):
        raise ValidationError("ipcw loss needs the dataset and the horizon")
    folds = range(1, cv.n_folds + 1)
    table = np.empty((len(cv.labels), cv.n_folds))
    for j, label in enumerate(cv.labels):
        for ki, k in enumerate(folds):
            if loss == "l2":
                table[j, ki] = loss_l2(cv, k, label)
            elif loss == "loglik":
                table[j, ki] = loss_loglik(cv, k, label)
            else:
                table[j, ki] = loss_ipcw(cv, dataset, k, label, tau)
    return CvRiskTable(loss=loss, labels=cv.labels, fold_losses=table,
                       mean_losses=table.mean(axis=1))


def select_best(table: CvRiskTable):
    """Lowest mean loss wins; ties go to the earliest library entry."""
    if len(table.labels) == 0:
        raise ValidationError("empty risk table")
    j = int(np.argmin(table.mean_losses))
    tie = bool(np.sum(table.mean_losses == table.mean_losses[j]) > 1)
    return table.labels[j], tie


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

def _assert_vertex_optimality(objective, alpha, p, tol=1e-9):
    """The meta-solution must do at least as well as every single learner."""
    value = objective(alpha)
    for j in range(p):
        vertex = np.zeros(p)
        vertex[j] = 1.0
        if value > objective(vertex) + tol:
            raise NumericalError(
                "meta-regression solution is worse than a single learner "
                f"(vertex {j}); solver defect"
            )


def _single_learner_weights(cv, loss, mode):
    return EnsembleWeights(
        loss=loss, mode=mode, labels=cv.labels,
        alpha=np.ones(1), flags={"single_learner": True},
    )


def ensemble_l2(cv: CvHazards) -> EnsembleWeights:
    """Nonnegative least squares of period outcomes on candidate hazards,
    normalized to the simplex."""
    p = len(cv.labels)
    if p == 1:
        return _single_learner_weights(cv, "l2", "simplex")
    psi = cv.rows
    y = cv.long.period_event.astype(float)
    sol = numerics.nnls(psi, y)

    def objective(a):
        r = y - psi @ a
        return float(r @ r) / len(y)

    _assert_vertex_optimality(objective, sol.coefficients, p)
    flags = {}
    try:
        alpha = numerics.simplex_normalize(sol.coefficients)
    except DegenerateEnsembleError:
        table = build_risk_table(cv, "l2")
        label, tie = select_best(table)
        alpha = np.zeros(p)
        alpha[cv.index_of(label)] = 1.0
        flags = {"fallback_select_best": label, "tie": tie}
    return EnsembleWeights(loss="l2", mode="simplex", labels=cv.labels,
                           alpha=alpha, flags=flags)


def ensemble_loglik(cv: CvHazards) -> EnsembleWeights:
    """Unconstrained logistic stack on logit-transformed hazards."""
    p = len(cv.labels)
    if p == 1:
        return _single_learner_weights(cv, "loglik", "unconstrained")
    q = np.clip(cv.rows, HAZARD_CLIP, 1.0 - HAZARD_CLIP)
    z = np.log(q / (1.0 - q))
    y = cv.long.period_event.astype(float)
    ridge_used = False
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        alpha = numerics.constrained_logit_stack(z, y)
    for w in caught:
        if "collinear" in str(w.message) or "ridge" in str(w.message):
            ridge_used = True
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)

    def objective(a):
        eta = z @ a
        return float(np.mean(np.logaddexp(0.0, eta) - y * eta))

    # The tiny ridge shifts the optimum; widen the certificate accordingly.
    _assert_vertex_optimality(objective, alpha, p,
                              tol=1e-9 if not ridge_used else 1e-6)
    return EnsembleWeights(loss="loglik", mode="unconstrained", labels=cv.labels,
                           alpha=alpha, flags={"ridge_used": ridge_used})


def ensemble_ipcw(cv: CvHazards, dataset: SurvivalDataset, tau: float,
                  curve: CensoringCurve | None = None) -> EnsembleWeights:
    """Weighted nonnegative least squares of I(follow-up > tau) on candidate
    survival probabilities, one row per individual not censored by tau."""
    p = len(cv.labels)
    if p == 1:
        return _single_learner_weights(cv, "ipcw", "simplex")
    time, event = _align_to_individuals(cv, dataset)
    if curve is None:
        curve = censoring_km(time, event)
    phi = cv.survival_at_horizon()
    w, is_event, is_survivor, capped = _ipcw_weights(time, event, tau, curve)
    eligible = is_event | is_survivor
    if not eligible.any():
        raise ValidationError("no individuals eligible at the horizon "
                              "(all censored earlier)")
    y = (time > tau).astype(float)
    sol = numerics.nnls(phi[eligible], y[eligible], weights=w[eligible])

    def objective(a):
        r = y[eligible] - phi[eligible] @ a
        return float(np.sum(w[eligible] * r ** 2) / eligible.sum())

    _assert_vertex_optimality(objective, sol.coefficients, p)
    flags = {"capped_weights": capped} if capped else {}
    try:
        alpha = numerics.simplex_normalize(sol.coefficients)
    except DegenerateEnsembleError:
        table = build_risk_table(cv, "ipcw", dataset=dataset, tau=tau)
        label, tie = select_best(table)
        alpha = np.zeros(p)
        alpha[cv.index_of(label)] = 1.0
        flags.update({"fallback_select_best": label, "tie": tie})
    return EnsembleWeights(loss="ipcw", mode="simplex", labels=cv.labels,
                           alpha=alpha, flags=flags)


# ---------------------------------------------------------------------------
# Final predictor
# ---------------------------------------------------------------------------

class DiscretePredictor:
    """Full-data refit of the non-zero-weight learners plus the combination
    rule for the chosen loss."""

    def __init__(self, weights: EnsembleWeights, learners, edges):
        self.weights = weights
        self.learners = dict(learners)  # label -> FittedLearner
        self.edges = np.asarray(edges, dtype=float)
        for lab, a in zip(weights.labels, weights.alpha):
            if a != 0 and lab not in self.learners:
                raise ValidationError(f"missing refit for weighted learner {lab!r}")

    @property
    def horizon(self) -> float:
        return float(self.edges[-1])

    def predict_hazard_grid(self, covariates) -> np.ndarray:
        """Combined discrete hazard Q(t|x); hazard-based modes only."""
        if self.weights.loss == "ipcw":
            raise ValidationError("the ipcw mode combines survival curves, "
                                  "not hazards")
        grids = []
        used = [(lab, a) for lab, a in zip(self.weights.labels, self.weights.alpha)
                if a != 0]
        for lab, a in used:
            grids.append((a, self.learners[lab].predict_hazard_grid(covariates)))
        if self.weights.loss == "loglik" and self.weights.mode == "unconstrained":
            acc = np.zeros_like(grids[0][1])
            for a, g in grids:
                q = np.clip(g, HAZARD_CLIP, 1.0 - HAZARD_CLIP)
                acc += a * np.log(q / (1.0 - q))
            return 1.0 / (1.0 + np.exp(-acc))
        acc = np.zeros_like(grids[0][1])
        for a, g in grids:
            acc += a * g
        return np.clip(acc, 0.0, 1.0)

    def predict_survival(self, covariates, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.weights.loss == "ipcw":
            acc = None
            for lab, a in zip(self.weights.labels, self.weights.alpha):
                if a == 0:
                    continue
                s = self.learners[lab].predict_survival(covariates, times)
                acc = a * s if acc is None else acc + a * s
            return np.clip(acc, 0.0, 1.0)
        hazard = self.predict_hazard_grid(covariates)
        steps = np.cumprod(1.0 - hazard, axis=1)
        padded = np.hstack([np.ones((hazard.shape[0], 1)), steps])
        completed = np.searchsorted(self.edges[1:], times, side="right")
        return padded[:, completed]

    def predict_survival_at_horizon(self, covariates) -> np.ndarray:
        return self.predict_survival(covariates, np.array([self.horizon]))[:, 0]

    def to_dict(self) -> dict:
        return {
            "kind": "discrete",
            "weights": self.weights.to_dict(),
            "labels": list(self.weights.labels),
            "alpha": [float(a) for a in self.weights.alpha],
            "mode": self.weights.mode,
            "loss": self.weights.loss,
            "edges": self.edges.tolist(),
            "learners": {lab: model.to_dict()
                         for lab, model in sorted(self.learners.items())},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DiscretePredictor":
        from .learners import learner_from_dict

        weights = EnsembleWeights(
            loss=payload["loss"],
            mode=payload["mode"],
            labels=tuple(payload["labels"]),
            alpha=np.asarray(payload["alpha"], dtype=float),
            flags=dict(payload.get("weights", {}).get("flags", {})),
        )
        learners = {lab: learner_from_dict(d)
                    for lab, d in payload["learners"].items()}
        return cls(weights, learners, payload["edges"])


def finalize(long: LongFormatDataset, specs, weights: EnsembleWeights) -> DiscretePredictor:
    """Refit the non-zero-weight learners on the full long data."""
    by_label = {s.label: s for s in specs}
    learners = {}
    for lab, a in zip(weights.labels, weights.alpha):
        if a == 0:
            continue
        try:
            learners[lab] = fit_learner(by_label[lab], long, target="event")
        except SurvStackError as exc:
            raise NumericalError(
                f"full-data refit failed for weighted learner {lab!r}: {exc}"
            )
    return DiscretePredictor(weights, learners, long.edges)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def run_discrete_super_learner(dataset: SurvivalDataset, specs, *, horizon: float,
                               n_periods: int, loss: str = "ipcw",
                               scheme: str = "equal-width", n_folds: int = 5,
                               seed: int = 0, ensemble: bool = True):
    """End-to-end discrete-time super learner; returns (predictor, report)."""
    from .data import assign_folds

    if loss not in LOSSES:
        raise ValidationError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    long = discretize(dataset, horizon=horizon, m=n_periods, scheme=scheme)
    folds = assign_folds(dataset, n_folds, seed)
    cv = cross_validate(long, specs, folds)
    table = build_risk_table(cv, loss, dataset=dataset, tau=horizon)
    selected, tie = select_best(table)

    if not ensemble:
        alpha = np.zeros(len(cv.labels))
        alpha[cv.index_of(selected)] = 1.0
        weights = EnsembleWeights(loss=loss, mode="selected", labels=cv.labels,
                                  alpha=alpha,
                                  flags={"selected": selected, "tie": tie})
    elif loss == "l2":
        weights = ensemble_l2(cv)
    elif loss == "loglik":
        weights = ensemble_loglik(cv)
    else:
        weights = ensemble_ipcw(cv, dataset, horizon)

    predictor = finalize(long, specs, weights)
    report = {
        "method": "discrete",
        "loss": loss,
        "ensemble": bool(ensemble),
        "horizon": float(horizon),
        "n_periods": int(long.n_periods),
        "n_folds": int(n_folds),
        "n": len(dataset),
        "n_events": int(dataset.n_events),
        "risk_table": table.to_dict(),
        "selected": selected,
        "selection_tie": tie,
        "weights": weights.to_dict(),
        "dropped_learners": [list(d) for d in cv.dropped],
    }
    return predictor, report
