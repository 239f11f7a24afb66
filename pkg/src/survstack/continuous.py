"""Iterative continuous-time survival super learner with coupled ensembles.

The event ensemble weights candidate survival curves S_j(t|x); the
censoring ensemble weights candidate censoring curves G_j(t|x). Each side
supplies the inverse-weighting denominator in the other side's
pseudo-outcomes:

    f_G(i,t) = 1 - event_i * I(T_i <= t) / G(T_i | x_i)
    f_S(i,t) = 1 - (1-event_i) * I(T_i < t) / S(T_i | x_i)

(the boundary conventions differ deliberately and are preserved exactly).
Starting from a marginal Kaplan-Meier censoring estimate, the loop
alternates nonnegative-least-squares fits of the two ensembles until the
combined survival matrix over all individuals x grid points moves less
than ``epsilon``, then refits the weighted learners on the full data.

Candidate fits are cross-validated once, before the loop; iterations only
re-weight them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .censoring import censoring_km
from .data import FoldAssignment, SurvivalDataset, TimeGrid, make_grid
from .errors import (
    DegenerateEnsembleError,
    NumericalError,
    SurvStackError,
    ValidationError,
)
from .learners import LearnerSpec, fit_learner

__all__ = [
    "IterationConfig",
    "CvCurves",
    "DualEnsemble",
    "cross_validate_curves",
    "initial_censoring",
    "pseudo_fG",
    "pseudo_fS",
    "event_loss",
    "censoring_loss",
    "fit_event_ensemble",
    "fit_censoring_ensemble",
    "one_cycle",
    "iterate",
    "finalize",
    "ContinuousPredictor",
    "run_continuous_super_learner",
]

DENOMINATOR_FLOOR = 0.05


@dataclass(frozen=True)
class IterationConfig:
    """Convergence threshold, iteration cap, and evaluation grid."""

    grid: TimeGrid
    epsilon: float = 1e-5
    max_iterations: int = 20

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be > 0")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")


@dataclass(frozen=True)
class CvCurves:
    """Cross-validated candidate curves on the grid and at own times.

    ``s_curves``/``g_curves`` have shape (n, grid, candidates);
    ``s_own``/``g_own`` give each candidate's prediction at the
    individual's observed time, used for pseudo-outcome denominators.
    """

    grid: TimeGrid
    event_labels: tuple
    censoring_labels: tuple
    s_curves: np.ndarray
    g_curves: np.ndarray
    s_own: np.ndarray
    g_own: np.ndarray
    individual_ids: tuple
    individual_fold: np.ndarray
    n_folds: int
    dropped: tuple = ()

    def __post_init__(self):
        n = len(self.individual_ids)
        v = len(self.grid.points)
        if self.s_curves.shape != (n, v, len(self.event_labels)):
            raise ValidationError("event curve matrix misaligned")
        if self.g_curves.shape != (n, v, len(self.censoring_labels)):
            raise ValidationError("censoring curve matrix misaligned")
        for name, arr in (("event", self.s_curves), ("censoring", self.g_curves)):
            if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
                raise ValidationError(f"{name} curves must lie in [0,1]")


@dataclass(frozen=True)
class DualEnsemble:
    """Coupled event/censoring weights with the iteration trace."""

    event_labels: tuple
    censoring_labels: tuple
    alpha: np.ndarray
    beta: np.ndarray
    iterations: int
    delta_history: tuple  # max |change in S^SL|, recorded from iteration 2 on
    converged: bool
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, w in (("event", self.alpha), ("censoring", self.beta)):
            if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
                raise ValidationError(f"{name} weights must be a simplex point")

    def to_dict(self) -> dict:
        return {
            "event_weights": {lab: float(a) for lab, a
                              in zip(self.event_labels, self.alpha)},
            "censoring_weights": {lab: float(b) for lab, b
                                  in zip(self.censoring_labels, self.beta)},
            "iterations": int(self.iterations),
            "delta_history": [float(d) for d in self.delta_history],
            "converged": bool(self.converged),
            "flags": dict(sorted(self.flags.items())),
        }


# ---------------------------------------------------------------------------
# Step 1: cross-validated candidate curves
# ---------------------------------------------------------------------------

def cross_validate_curves(dataset: SurvivalDataset, event_specs, censoring_specs,
                          folds: FoldAssignment, grid: TimeGrid) -> CvCurves:
    """Fit both libraries per training split; predict the held-out fold.

    Failures drop the learner from its library with a recorded reason.
    """
    event_specs = list(event_specs)
    censoring_specs = list(censoring_specs)
    if not event_specs or not censoring_specs:
        raise ValidationError("need at least one spec in each library")
    for specs in (event_specs, censoring_specs):
        labels = [s.label for s in specs]
        if len(set(labels)) != len(labels):
            raise ValidationError("learner labels must be unique per library")

    n = len(dataset)
    v = len(grid.points)
    p, q = len(event_specs), len(censoring_specs)
    s_curves = np.full((n, v, p), np.nan)
    g_curves = np.full((n, v, q), np.nan)
    s_own = np.full((n, p), np.nan)
    g_own = np.full((n, q), np.nan)
    alive_s = [True] * p
    alive_g = [True] * q
    dropped = []

    fold_of = np.array([folds.fold_of[rid] for rid in dataset.ids], dtype=int)
    for k in range(1, folds.K + 1):
        val = np.flatnonzero(fold_of == k)
        train = np.flatnonzero(fold_of != k)
        if np.intersect1d(val, train).size:
            raise ValidationError("fold overlap between training and validation")
        d_train = dataset.subset(train)
        x_val = dataset.covariates[val]
        t_val = dataset.time[val]

        for target, specs, alive, curves, own in (
            ("event", event_specs, alive_s, s_curves, s_own),
            ("censoring", censoring_specs, alive_g, g_curves, g_own),
        ):
            for j, spec in enumerate(specs):
                if not alive[j]:
                    continue
                try:
                    model = fit_learner(spec, d_train, target=target)
                    with warnings.catch_warnings():
                        # Held-out extremes always query past each training
                        # fold's support; the carry-forward there is by
                        # construction, not a signal worth surfacing.
                        warnings.filterwarnings(
                            "ignore", message=".*beyond fitted support.*",
                            category=RuntimeWarning,
                        )
                        curves[val, :, j] = model.predict_survival(x_val, grid.points)
                        own[val, j] = model.predict_survival_at(x_val, t_val)
                except (SurvStackError, np.linalg.LinAlgError) as exc:
                    alive[j] = False
                    dropped.append((target, spec.label, k,
                                    f"{type(exc).__name__}: {exc}"))

    keep_s = [j for j in range(p) if alive_s[j]]
    keep_g = [j for j in range(q) if alive_g[j]]
    if not keep_s:
        raise ValidationError("every event learner failed during cross-validation")
    if not keep_g:
        raise ValidationError("every censoring learner failed during cross-validation")
    return CvCurves(
        grid=grid,
        event_labels=tuple(event_specs[j].label for j in keep_s),
        censoring_labels=tuple(censoring_specs[j].label for j in keep_g),
        s_curves=s_curves[:, :, keep_s],
        g_curves=g_curves[:, :, keep_g],
        s_own=s_own[:, keep_s],
        g_own=g_own[:, keep_g],
        individual_ids=dataset.ids,
        individual_fold=fold_of,
        n_folds=folds.K,
        dropped=tuple(dropped),
    )


# ---------------------------------------------------------------------------
# Steps 2-4: initial censoring estimate and pseudo-outcomes
# ---------------------------------------------------------------------------

def initial_censoring(dataset: SurvivalDataset) -> np.ndarray:
    """Marginal censoring Kaplan-Meier evaluated at each observed time.

    Any reasonable starting model works; this one is parameter-free and
    deterministic. With no censoring the curve is identically 1.
    """
    curve = censoring_km(dataset.time, dataset.event)
    return np.asarray(curve.at(dataset.time), dtype=float)


def _floor_denominator(values, floor=DENOMINATOR_FLOOR):
    values = np.asarray(values, dtype=float)
    n_capped = int(np.sum(values < floor))
    return np.maximum(values, floor), n_capped


def pseudo_fG(time, event, g_at_own, grid_points) -> np.ndarray:
    """f_G(i,t) = 1 - event_i I(T_i <= t) / G(T_i|x_i); closed indicator."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=float)
    g_at_own = np.asarray(g_at_own, dtype=float)
    if np.any(g_at_own <= 0):
        raise ValidationError("censoring denominators must be positive")
    indicator = time[:, None] <= np.asarray(grid_points, dtype=float)[None, :]
    return 1.0 - (event / g_at_own)[:, None] * indicator


def pseudo_fS(time, event, s_at_own, grid_points) -> np.ndarray:
    """f_S(i,t) = 1 - (1-event_i) I(T_i < t) / S(T_i|x_i); open indicator.

    The strict inequality (against f_G's closed one) is intentional and
    preserved exactly.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=float)
    s_at_own = np.asarray(s_at_own, dtype=float)
    if np.any(s_at_own <= 0):
        raise ValidationError("survival denominators must be positive")
    indicator = time[:, None] < np.asarray(grid_points, dtype=float)[None, :]
    return 1.0 - ((1.0 - event) / s_at_own)[:, None] * indicator


# ---------------------------------------------------------------------------
# Losses and ensemble fits
# ---------------------------------------------------------------------------

def event_loss(s_j, f_g, grid: TimeGrid, fold_mask) -> float:
    """Grid-sum Brier risk: sum_t (v/|D_k|) sum_i (S_j(t|x_i) - f_G(i,t))^2."""
    fold_mask = np.asarray(fold_mask, dtype=bool)
    if not fold_mask.any():
        raise ValidationError("empty fold selection")
    resid = s_j[fold_mask] - f_g[fold_mask]
    return float(grid.spacing * np.sum(resid ** 2) / fold_mask.sum())


def censoring_loss(g_j, f_s, grid: TimeGrid, fold_mask) -> float:
    """Mirror of event_loss for the censoring side."""
    return event_loss(g_j, f_s, grid, fold_mask)


def _mean_fold_losses(curves, pseudo, grid, fold_of, n_folds, loss_fn):
    p = curves.shape[2]
    out = np.empty(p)
    for j in range(p):
        per_fold = [loss_fn(curves[:, :, j], pseudo, grid, fold_of == k)
                    for k in range(1, n_folds + 1)]
        out[j] = float(np.mean(per_fold))
    return out


def _stack_weights(curves, pseudo, mean_losses, label_list):
    """Pooled NNLS of the pseudo-outcomes on the candidate curves, scaled
    to the simplex; all-zero solutions fall back to the best single
    learner by mean cross-validated loss."""
    n, v, p = curves.shape
    if p == 1:
        return np.ones(1), {"single_learner": True}
    design = curves.reshape(n * v, p)
    y = pseudo.reshape(n * v)
    sol = numerics.nnls(design, y)

    def objective(a):
        r = y - design @ a
        return float(r @ r) / len(y)

    _assert_vertex_optimality(objective, sol.coefficients, p)
    try:
        return numerics.simplex_normalize(sol.coefficients), {}
    except DegenerateEnsembleError:
        j = int(np.argmin(mean_losses))
        weights = np.zeros(p)
        weights[j] = 1.0
        return weights, {"fallback_select_best": label_list[j]}


def _assert_vertex_optimality(objective, alpha, p, tol=1e-9):
    value = objective(alpha)
    for j in range(p):
        vertex = np.zeros(p)
        vertex[j] = 1.0
        if value > objective(vertex) + tol:
            raise NumericalError(
                "meta-regression solution is worse than a single learner "
                f"(vertex {j}); solver defect"
            )


def _select_weights(mean_losses, label_list):
    j = int(np.argmin(mean_losses))
    tie = bool(np.sum(mean_losses == mean_losses[j]) > 1)
    weights = np.zeros(len(mean_losses))
    weights[j] = 1.0
    return weights, {"selected": label_list[j], "tie": tie}


def fit_event_ensemble(cv: CvCurves, f_g, ensemble: bool = True):
    losses = _mean_fold_losses(cv.s_curves, f_g, cv.grid, cv.individual_fold,
                               cv.n_folds, event_loss)
    if ensemble:
        weights, flags = _stack_weights(cv.s_curves, f_g, losses, cv.event_labels)
    else:
        weights, flags = _select_weights(losses, cv.event_labels)
    return weights, losses, flags


def fit_censoring_ensemble(cv: CvCurves, f_s, ensemble: bool = True):
    losses = _mean_fold_losses(cv.g_curves, f_s, cv.grid, cv.individual_fold,
                               cv.n_folds, censoring_loss)
    if ensemble:
        weights, flags = _stack_weights(cv.g_curves, f_s, losses,
                                        cv.censoring_labels)
    else:
        weights, flags = _select_weights(losses, cv.censoring_labels)
    return weights, losses, flags


# ---------------------------------------------------------------------------
# Steps 5-6: the iteration loop
# ---------------------------------------------------------------------------

def one_cycle(dataset: SurvivalDataset, cv: CvCurves, g_at_own, ensemble=True):
    """One alternation: event weights from f_G, then censoring weights from
    f_S, then the updated censoring denominators. Returns
    (alpha, beta, g_next, s_sl_matrix, state dict)."""
    time, event = dataset.time, dataset.event
    f_g = pseudo_fG(time, event, g_at_own, cv.grid.points)
    alpha, event_losses, a_flags = fit_event_ensemble(cv, f_g, ensemble)

    s_sl_own, capped_s = _floor_denominator(cv.s_own @ alpha)
    f_s = pseudo_fS(time, event, s_sl_own, cv.grid.points)
    beta, cens_losses, b_flags = fit_censoring_ensemble(cv, f_s, ensemble)

    g_next, capped_g = _floor_denominator(cv.g_own @ beta)
    s_sl = cv.s_curves @ alpha
    state = {
        "event_losses": event_losses,
        "censoring_losses": cens_losses,
        "event_flags": a_flags,
        "censoring_flags": b_flags,
        "capped_denominators": capped_s + capped_g,
    }
    return alpha, beta, g_next, s_sl, state


def iterate(dataset: SurvivalDataset, cv: CvCurves, config: IterationConfig,
            ensemble: bool = True):
    """Alternate the coupled ensembles until S^SL stabilizes.

    Convergence compares consecutive cross-validated S^SL matrices over
    all n x grid entries; deltas are recorded from iteration 2 onward. At
    the cap the minimum-delta iterate is returned, flagged unconverged.
    Returns (DualEnsemble, state of the returned iterate).
    """
    if tuple(config.grid.points) != tuple(cv.grid.points):
        raise ValidationError("iteration grid must match the cv grid")
    g_hat, capped_init = _floor_denominator(initial_censoring(dataset))

    prev_s = None
    deltas = []
    best = None  # (delta, iteration, alpha, beta, state)
    total_caps = capped_init
    converged = False
    iterations = 0
    for it in range(1, config.max_iterations + 1):
        iterations = it
        alpha, beta, g_hat, s_sl, state = one_cycle(dataset, cv, g_hat, ensemble)
        total_caps += state["capped_denominators"]
        if prev_s is None:
            best = (np.inf, it, alpha, beta, state)
        else:
            delta = float(np.max(np.abs(s_sl - prev_s)))
            deltas.append(delta)
            if best is None or delta < best[0]:
                best = (delta, it, alpha, beta, state)
            if delta < config.epsilon:
                converged = True
                prev_s = s_sl
                break
        prev_s = s_sl
    if not converged:
        warnings.warn(
            f"iteration did not converge in {config.max_iterations} passes "
            f"(best delta {best[0]:.3g}); returning the most stable iterate",
            RuntimeWarning,
            stacklevel=2,
        )
    _, best_it, alpha, beta, state = best
    dual = DualEnsemble(
        event_labels=cv.event_labels,
        censoring_labels=cv.censoring_labels,
        alpha=alpha,
        beta=beta,
        iterations=iterations,
        delta_history=tuple(deltas),
        converged=converged,
        flags={
            "capped_denominators": int(total_caps),
            "returned_iteration": int(best_it if not converged else iterations),
            **{f"event_{k}": v for k, v in state["event_flags"].items()},
            **{f"censoring_{k}": v for k, v in state["censoring_flags"].items()},
        },
    )
    return dual, state


# ---------------------------------------------------------------------------
# Final predictor
# ---------------------------------------------------------------------------

class ContinuousPredictor:
    """Full-data refits combined linearly by the final weights."""

    def __init__(self, dual: DualEnsemble, event_models, censoring_models):
        self.dual = dual
        self.event_models = dict(event_models)
        self.censoring_models = dict(censoring_models)
        for lab, a in zip(dual.event_labels, dual.alpha):
            if a != 0 and lab not in self.event_models:
                raise ValidationError(f"missing refit for event learner {lab!r}")
        for lab, b in zip(dual.censoring_labels, dual.beta):
            if b != 0 and lab not in self.censoring_models:
                raise ValidationError(f"missing refit for censoring learner {lab!r}")

    def _combine(self, models, labels, weights, covariates, times):
        times = np.asarray(times, dtype=float)
        acc = None
        for lab, w in zip(labels, weights):
            if w == 0:
                continue
            s = models[lab].predict_survival(covariates, times)
            acc = w * s if acc is None else acc + w * s
        acc = np.clip(acc, 0.0, 1.0)
        # Exact convex mixing of monotone curves is monotone; the running
        # minimum only mops up floating-point noise on sorted queries.
        if times.size > 1 and np.all(np.diff(times) >= 0):
            if np.any(np.diff(acc, axis=1) > 1e-12):
                acc = np.minimum.accumulate(acc, axis=1)
        return acc

    def predict_survival(self, covariates, times) -> np.ndarray:
        return self._combine(self.event_models, self.dual.event_labels,
                             self.dual.alpha, covariates, times)

    def predict_censoring(self, covariates, times) -> np.ndarray:
        return self._combine(self.censoring_models, self.dual.censoring_labels,
                             self.dual.beta, covariates, times)

    def to_dict(self) -> dict:
        return {
            "kind": "continuous",
            "dual": self.dual.to_dict(),
            "event_labels": list(self.dual.event_labels),
            "censoring_labels": list(self.dual.censoring_labels),
            "alpha": [float(a) for a in self.dual.alpha],
            "beta": [float(b) for b in self.dual.beta],
            "event_models": {lab: m.to_dict()
                             for lab, m in sorted(self.event_models.items())},
            "censoring_models": {lab: m.to_dict()
                                 for lab, m in sorted(self.censoring_models.items())},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ContinuousPredictor":
        from .learners import learner_from_dict

        dual = DualEnsemble(
            event_labels=tuple(payload["event_labels"]),
            censoring_labels=tuple(payload["censoring_labels"]),
            alpha=np.asarray(payload["alpha"], dtype=float),
            beta=np.asarray(payload["beta"], dtype=float),
            iterations=int(payload["dual"]["iterations"]),
            delta_history=tuple(payload["dual"]["delta_history"]),
            converged=bool(payload["dual"]["converged"]),
            flags=dict(payload["dual"].get("flags", {})),
        )
        event_models = {lab: learner_from_dict(d)
                        for lab, d in payload["event_models"].items()}
        cens_models = {lab: learner_from_dict(d)
                       for lab, d in payload["censoring_models"].items()}
        return cls(dual, event_models, cens_models)


def finalize(dataset: SurvivalDataset, event_specs, censoring_specs,
             dual: DualEnsemble) -> ContinuousPredictor:
    """Refit every non-zero-weight learner on the full data."""
    def refit(specs, labels, weights, target):
        by_label = {s.label: s for s in specs}
        out = {}
        for lab, w in zip(labels, weights):
            if w == 0:
                continue
            try:
                out[lab] = fit_learner(by_label[lab], dataset, target=target)
            except SurvStackError as exc:
                raise NumericalError(
                    f"full-data refit failed for {target} learner {lab!r}: {exc}"
                )
        return out

    event_models = refit(event_specs, dual.event_labels, dual.alpha, "event")
    cens_models = refit(censoring_specs, dual.censoring_labels, dual.beta,
                        "censoring")
    return ContinuousPredictor(dual, event_models, cens_models)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def run_continuous_super_learner(dataset: SurvivalDataset, event_specs,
                                 censoring_specs, *, tau: float,
                                 grid_points: int = 100, n_folds: int = 5,
                                 seed: int = 0, epsilon: float = 1e-5,
                                 max_iterations: int = 20,
                                 ensemble: bool = True):
    """End-to-end iterative super learner; returns (predictor, report)."""
    from .data import assign_folds

    grid = make_grid(tau, grid_points)
    folds = assign_folds(dataset, n_folds, seed)
    cv = cross_validate_curves(dataset, event_specs, censoring_specs, folds, grid)
    config = IterationConfig(grid=grid, epsilon=epsilon,
                             max_iterations=max_iterations)
    dual, state = iterate(dataset, cv, config, ensemble=ensemble)
    predictor = finalize(dataset, event_specs, censoring_specs, dual)
    report = {
        "method": "continuous",
        "ensemble": bool(ensemble),
        "horizon": float(tau),
        "grid_points": int(grid_points),
        "n_folds": int(n_folds),
        "n": len(dataset),
        "n_events": int(dataset.n_events),
        "epsilon": float(epsilon),
        "max_iterations": int(max_iterations),
        "dual": dual.to_dict(),
        "event_mean_losses": {lab: float(v) for lab, v
                              in zip(cv.event_labels, state["event_losses"])},
        "censoring_mean_losses": {lab: float(v) for lab, v
                                  in zip(cv.censoring_labels,
                                         state["censoring_losses"])},
        "dropped_learners": [list(d) for d in cv.dropped],
    }
    return predictor, report
