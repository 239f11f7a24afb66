"""State learner: pick an (event, censoring) pair by a three-state Brier score.

Each individual occupies one of three states at time t: 0 (still at risk),
1 (event observed by t), or -1 (censored by t). The observed state path is
known at every time for everyone, so candidate pairs of cumulative-hazard
learners can be scored by an ordinary Brier score on the state indicators,
with no inverse-of-censoring weights anywhere.

Occupancy probabilities come from the hazard increments on the grid:

    F(t_l,  0) = exp(-L(t_l) - G(t_l))
    F(t_l,  1) = sum_{m<=l} F(t_{m-1}, 0) * (L(t_m) - L(t_{m-1}))
    F(t_l, -1) = sum_{m<=l} F(t_{m-1}, 0) * (G(t_m) - G(t_{m-1}))

with F(t_0, 0) = 1 and L(t_0) = G(t_0) = 0. The exponential form is kept
exactly as written, so the three probabilities sum to 1 only up to a term
of order the grid spacing; that gap shrinks as the grid is refined and is
checked, not hidden.

Selection is the plain argmin of mean integrated Brier score over the
p x q pair grid; no ensemble weights are formed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import FoldAssignment, SurvivalDataset, TimeGrid, make_grid
from .errors import (
    LearnerError,
    NumericalError,
    SurvStackError,
    ValidationError,
)
from .learners import LearnerSpec, fit_learner
from .seeds import substream_seed

__all__ = [
    "ObservedStatePath",
    "StateOccupancy",
    "PairRiskTable",
    "CvCumhaz",
    "cross_validate_cumhaz",
    "state_occupancy",
    "brier_states",
    "integrated_brier",
    "pair_ibs",
    "pair_risk_table",
    "select_pair",
    "StatePredictor",
    "finalize",
    "run_state_learner",
]


@dataclass(frozen=True)
class ObservedStatePath:
    """Right-continuous observed state: 0 before the observed time, then
    1 (event) or -1 (censored) from that time onward."""

    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "time", np.asarray(self.time, dtype=float))
        object.__setattr__(self, "event", np.asarray(self.event, dtype=int))
        if self.time.shape != self.event.shape:
            raise ValidationError("time and event must align")

    def state_at(self, t) -> np.ndarray:
        """States at each query time; shape (n, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        reached = self.time[:, None] <= t[None, :]
        sign = np.where(self.event == 1, 1, -1)[:, None]
        return np.where(reached, sign, 0)


@dataclass(frozen=True)
class StateOccupancy:
    """Occupancy probabilities on a grid; rows are individuals."""

    grid: TimeGrid
    at_risk: np.ndarray    # F(t, 0)
    event: np.ndarray      # F(t, 1)
    censored: np.ndarray   # F(t, -1)

    def __post_init__(self):
        v = len(self.grid.points)
        for name, arr in (("at_risk", self.at_risk), ("event", self.event),
                          ("censored", self.censored)):
            if arr.ndim != 2 or arr.shape[1] != v:
                raise ValidationError(f"{name} must be (n, {v})")
            if np.any(arr < -1e-9):
                raise ValidationError(f"{name} occupancy went negative")
        if np.any(self.at_risk > 1 + 1e-9):
            raise ValidationError("at-risk occupancy exceeds 1")
        if np.any(np.diff(self.at_risk, axis=1) > 1e-9):
            raise ValidationError("at-risk occupancy must be non-increasing")
        for name, arr in (("event", self.event), ("censored", self.censored)):
            if np.any(np.diff(arr, axis=1) < -1e-9):
                raise ValidationError(f"{name} occupancy must be non-decreasing")

    def state_sum_gap(self) -> float:
        total = self.at_risk + self.event + self.censored
        return float(np.max(np.abs(total - 1.0)))


@dataclass(frozen=True)
class PairRiskTable:
    """Integrated Brier scores for every (event, censoring) pair."""

    event_labels: tuple
    censoring_labels: tuple
    fold_ibs: np.ndarray   # (p, q, K)
    mean_ibs: np.ndarray   # (p, q)

    def __post_init__(self):
        p, q = len(self.event_labels), len(self.censoring_labels)
        if self.fold_ibs.shape[:2] != (p, q) or self.mean_ibs.shape != (p, q):
            raise ValidationError("risk table misaligned with labels")
        if not (np.all(np.isfinite(self.fold_ibs))
                and np.all(np.isfinite(self.mean_ibs))):
            raise ValidationError("non-finite integrated Brier score")
        if np.max(np.abs(self.fold_ibs.mean(axis=2) - self.mean_ibs)) > 1e-12:
            raise ValidationError("mean column must average the folds")

    def to_dict(self) -> dict:
        return {
            "event_labels": list(self.event_labels),
            "censoring_labels": list(self.censoring_labels),
            "mean_ibs": [[float(v) for v in row] for row in self.mean_ibs],
        }


@dataclass(frozen=True)
class CvCumhaz:
    """Cross-validated cumulative hazards for both libraries on the grid."""

    grid: TimeGrid
    event_labels: tuple
    censoring_labels: tuple
    lambda_curves: np.ndarray  # (n, grid, p)
    gamma_curves: np.ndarray   # (n, grid, q)
    individual_ids: tuple
    individual_fold: np.ndarray
    n_folds: int
    dropped: tuple = ()

    def __post_init__(self):
        n, v = len(self.individual_ids), len(self.grid.points)
        if self.lambda_curves.shape != (n, v, len(self.event_labels)):
            raise ValidationError("event hazard matrix misaligned")
        if self.gamma_curves.shape != (n, v, len(self.censoring_labels)):
            raise ValidationError("censoring hazard matrix misaligned")
        for name, arr in (("event", self.lambda_curves),
                          ("censoring", self.gamma_curves)):
            if np.any(arr < -1e-12):
                raise ValidationError(f"{name} cumulative hazards must be >= 0")


def cross_validate_cumhaz(dataset: SurvivalDataset, event_specs, censoring_specs,
                          folds: FoldAssignment, grid: TimeGrid) -> CvCumhaz:
    """Held-out cumulative-hazard predictions for every candidate."""
    event_specs = list(event_specs)
    censoring_specs = list(censoring_specs)
    if not event_specs or not censoring_specs:
        raise ValidationError("need at least one spec in each library")
    for specs in (event_specs, censoring_specs):
        labels = [s.label for s in specs]
        if len(set(labels)) != len(labels):
            raise ValidationError("learner labels must be unique per library")

    n, v = len(dataset), len(grid.points)
    lam = np.full((n, v, len(event_specs)), np.nan)
    gam = np.full((n, v, len(censoring_specs)), np.nan)
    alive_e = [True] * len(event_specs)
    alive_c = [True] * len(censoring_specs)
    dropped = []

    fold_of = np.array([folds.fold_of[rid] for rid in dataset.ids], dtype=int)
    for k in range(1, folds.K + 1):
        val = np.flatnonzero(fold_of == k)
        d_train = dataset.subset(np.flatnonzero(fold_of != k))
        x_val = dataset.covariates[val]
        for target, specs, alive, out in (
            ("event", event_specs, alive_e, lam),
            ("censoring", censoring_specs, alive_c, gam),
        ):
            for j, spec in enumerate(specs):
                if not alive[j]:
                    continue
                try:
                    model = fit_learner(spec, d_train, target=target)
                    with warnings.catch_warnings():
                        # Carry-forward past each training fold's support is
                        # inherent to the split, not a signal.
                        warnings.filterwarnings(
                            "ignore", message=".*beyond fitted support.*",
                            category=RuntimeWarning,
                        )
                        out[val, :, j] = model.predict_cumhaz(x_val, grid.points)
                except (SurvStackError, np.linalg.LinAlgError) as exc:
                    alive[j] = False
                    dropped.append((target, spec.label, k,
                                    f"{type(exc).__name__}: {exc}"))

    keep_e = [j for j, a in enumerate(alive_e) if a]
    keep_c = [j for j, a in enumerate(alive_c) if a]
    if not keep_e:
        raise ValidationError("every event learner failed during cross-validation")
    if not keep_c:
        raise ValidationError("every censoring learner failed during cross-validation")
    return CvCumhaz(
        grid=grid,
        event_labels=tuple(event_specs[j].label for j in keep_e),
        censoring_labels=tuple(censoring_specs[j].label for j in keep_c),
        lambda_curves=lam[:, :, keep_e],
        gamma_curves=gam[:, :, keep_c],
        individual_ids=dataset.ids,
        individual_fold=fold_of,
        n_folds=folds.K,
        dropped=tuple(dropped),
    )


def state_occupancy(lambda_rows, gamma_rows, grid: TimeGrid,
                    labels=("event", "censoring")) -> StateOccupancy:
    """Occupancy from hazard increments, exponential form for state 0.

    Accepts (n, grid) matrices or single (grid,) rows.
    """
    lam = np.atleast_2d(np.asarray(lambda_rows, dtype=float))
    gam = np.atleast_2d(np.asarray(gamma_rows, dtype=float))
    v = len(grid.points)
    if lam.shape[1] != v or gam.shape[1] != v or lam.shape[0] != gam.shape[0]:
        raise ValidationError("hazard rows misaligned with the grid")

    for name, arr in ((labels[0], lam), (labels[1], gam)):
        inc = np.diff(np.concatenate([np.zeros((arr.shape[0], 1)), arr], axis=1),
                      axis=1)
        if np.any(inc < -1e-9):
            raise LearnerError(
                f"{name}: cumulative hazard decreased on the grid "
                "(violated learner contract)"
            )

    d_lam = np.diff(lam, axis=1, prepend=0.0)
    d_gam = np.diff(gam, axis=1, prepend=0.0)
    # Tiny negative increments are floating-point noise; larger ones were
    # rejected above.
    d_lam = np.maximum(d_lam, 0.0)
    d_gam = np.maximum(d_gam, 0.0)

    at_risk = np.exp(-(lam + gam))
    prev = np.concatenate([np.ones((lam.shape[0], 1)), at_risk[:, :-1]], axis=1)
    event = np.cumsum(prev * d_lam, axis=1)
    censored = np.cumsum(prev * d_gam, axis=1)
    return StateOccupancy(grid=grid, at_risk=at_risk, event=event,
                          censored=censored)


def brier_states(occupancy: StateOccupancy, path: ObservedStatePath,
                 t: float) -> float:
    """Mean over individuals of sum_s (F(t,s) - I(state(t)=s))^2.

    Uses the observed state path directly; there is deliberately no
    censoring model or weight input.
    """
    pts = occupancy.grid.points
    idx = int(np.argmin(np.abs(pts - t)))
    if abs(pts[idx] - t) > 1e-9 * max(1.0, occupancy.grid.horizon):
        raise ValidationError(f"t={t} is not a grid point")
    s = path.state_at(t)[:, 0]
    if s.shape[0] != occupancy.at_risk.shape[0]:
        raise ValidationError("state path misaligned with occupancy rows")
    b = ((occupancy.at_risk[:, idx] - (s == 0)) ** 2
         + (occupancy.event[:, idx] - (s == 1)) ** 2
         + (occupancy.censored[:, idx] - (s == -1)) ** 2)
    return float(b.mean())


def integrated_brier(scores, grid: TimeGrid) -> float:
    """Rectangle-rule integral: sum_t spacing * B(t)."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != grid.points.shape:
        raise ValidationError("need one score per grid point")
    return float(grid.spacing * scores.sum())


def pair_ibs(lambda_rows, gamma_rows, path: ObservedStatePath, fold_of,
             n_folds: int, grid: TimeGrid, labels=("event", "censoring")):
    """Per-fold integrated Brier scores for one (event, censoring) pair."""
    occ = state_occupancy(lambda_rows, gamma_rows, grid, labels)
    states = path.state_at(grid.points)  # (n, grid)
    resid = ((occ.at_risk - (states == 0)) ** 2
             + (occ.event - (states == 1)) ** 2
             + (occ.censored - (states == -1)) ** 2)
    fold_of = np.asarray(fold_of, dtype=int)
    out = np.empty(n_folds)
    for k in range(1, n_folds + 1):
        mask = fold_of == k
        if not mask.any():
            raise ValidationError(f"fold {k} is empty")
        out[k - 1] = grid.spacing * float(resid[mask].mean(axis=0).sum())
    return out


def pair_risk_table(cv: CvCumhaz, dataset: SurvivalDataset) -> PairRiskTable:
    """Score every pair on the cross-validated hazards."""
    order = {rid: i for i, rid in enumerate(dataset.ids)}
    if set(order) != set(cv.individual_ids):
        raise ValidationError("dataset does not match the cross-validated ids")
    pos = np.array([order[rid] for rid in cv.individual_ids], dtype=int)
    path = ObservedStatePath(time=dataset.time[pos], event=dataset.event[pos])

    p, q = len(cv.event_labels), len(cv.censoring_labels)
    fold_ibs = np.empty((p, q, cv.n_folds))
    for j in range(p):
        for jj in range(q):
            fold_ibs[j, jj] = pair_ibs(
                cv.lambda_curves[:, :, j], cv.gamma_curves[:, :, jj],
                path, cv.individual_fold, cv.n_folds, cv.grid,
                labels=(cv.event_labels[j], cv.censoring_labels[jj]),
            )
    return PairRiskTable(
        event_labels=cv.event_labels,
        censoring_labels=cv.censoring_labels,
        fold_ibs=fold_ibs,
        mean_ibs=fold_ibs.mean(axis=2),
    )


def select_pair(table: PairRiskTable):
    """Argmin over the pair grid; ties resolve to the first pair in
    (event order, censoring order) and raise the flag."""
    flat = int(np.argmin(table.mean_ibs))  # first minimum in row-major order
    j, jj = np.unravel_index(flat, table.mean_ibs.shape)
    tie = bool(np.sum(table.mean_ibs == table.mean_ibs[j, jj]) > 1)
    return (table.event_labels[j], table.censoring_labels[jj]), tie


class StatePredictor:
    """Full-data refit of the selected pair; survival is exp(-Lambda)."""

    def __init__(self, event_label, censoring_label, event_model,
                 censoring_model):
        self.event_label = event_label
        self.censoring_label = censoring_label
        self.event_model = event_model
        self.censoring_model = censoring_model

    def predict_survival(self, covariates, times) -> np.ndarray:
        return np.exp(-self.event_model.predict_cumhaz(covariates, times))

    def predict_censoring(self, covariates, times) -> np.ndarray:
        return np.exp(-self.censoring_model.predict_cumhaz(covariates, times))

    def to_dict(self) -> dict:
        return {
            "kind": "state",
            "event_label": self.event_label,
            "censoring_label": self.censoring_label,
            "event_model": self.event_model.to_dict(),
            "censoring_model": self.censoring_model.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "StatePredictor":
        from .learners import learner_from_dict

        return cls(
            event_label=payload["event_label"],
            censoring_label=payload["censoring_label"],
            event_model=learner_from_dict(payload["event_model"]),
            censoring_model=learner_from_dict(payload["censoring_model"]),
        )


def finalize(dataset: SurvivalDataset, event_specs, censoring_specs,
             selection) -> StatePredictor:
    """Refit the selected event and censoring learners on the full data."""
    event_label, censoring_label = selection
    by_event = {s.label: s for s in event_specs}
    by_cens = {s.label: s for s in censoring_specs}
    try:
        event_model = fit_learner(by_event[event_label], dataset, target="event")
        cens_model = fit_learner(by_cens[censoring_label], dataset,
                                 target="censoring")
    except SurvStackError as exc:
        raise NumericalError(f"full-data refit failed: {exc}")
    return StatePredictor(event_label, censoring_label, event_model, cens_model)


def _reseed_for_role(specs, master_seed, role):
    """Give stochastic learners independent seeds per (seed, role, label)."""
    out = []
    for spec in specs:
        hp = dict(spec.hyperparameters)
        if "seed" in hp:
            hp["seed"] = substream_seed(master_seed, "state", role, spec.label)
            out.append(LearnerSpec(family=spec.family, label=spec.label,
                                   hyperparameters=hp))
        else:
            out.append(spec)
    return out


def run_state_learner(dataset: SurvivalDataset, event_specs, censoring_specs,
                      *, tau: float, grid_points: int = 100, n_folds: int = 5,
                      seed: int = 0):
    """End-to-end state learner; returns (predictor, report)."""
    from .data import assign_folds

    grid = make_grid(tau, grid_points)
    folds = assign_folds(dataset, n_folds, seed)
    event_specs = _reseed_for_role(event_specs, seed, "event")
    censoring_specs = _reseed_for_role(censoring_specs, seed, "censoring")
    cv = cross_validate_cumhaz(dataset, event_specs, censoring_specs, folds, grid)
    table = pair_risk_table(cv, dataset)
    selection, tie = select_pair(table)
    predictor = finalize(dataset, event_specs, censoring_specs, selection)
    report = {
        "method": "statelearner",
        "horizon": float(tau),
        "grid_points": int(grid_points),
        "n_folds": int(n_folds),
        "n": len(dataset),
        "n_events": int(dataset.n_events),
        "risk_table": table.to_dict(),
        "selected_event": selection[0],
        "selected_censoring": selection[1],
        "selection_tie": bool(tie),
        "dropped_learners": [list(d) for d in cv.dropped],
    }
    return predictor, report
