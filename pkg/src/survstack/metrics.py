"""Test-set metrics for survival predictions at a horizon.

All metrics take survival predictions S(tau|x) on an independent test set
and handle right censoring by inverse-of-censoring-probability weights:
an individual with an observed event by tau gets 1/G(T-), a survivor past
tau gets 1/G(tau), and anyone censored before tau contributes nothing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .censoring import censoring_km
from .data import SurvivalDataset
from .errors import ValidationError
from .learners import _marginal_hazards

__all__ = [
    "MetricReport",
    "censoring_weights",
    "brier_ipcw",
    "scaled_brier",
    "uno_c",
    "auc_t",
    "calibration_table",
    "compute_metrics",
]

WEIGHT_CAP = 20.0


@dataclass(frozen=True)
class MetricReport:
    brier: float
    scaled_brier: float   # percent
    c_index: float        # percent
    auc: float            # percent
    horizon: float
    calibration: tuple    # rows of dicts

    def __post_init__(self):
        if not 0.0 <= self.brier <= 1.0:
            raise ValidationError(f"brier {self.brier} outside [0,1]")
        for name, v in (("c_index", self.c_index), ("auc", self.auc)):
            if not 0.0 <= v <= 100.0:
                raise ValidationError(f"{name} {v} outside [0,100]")

    def to_dict(self) -> dict:
        return {
            "brier": float(self.brier),
            "scaled_brier": float(self.scaled_brier),
            "c_index": float(self.c_index),
            "auc": float(self.auc),
            "horizon": float(self.horizon),
            "calibration": [dict(row) for row in self.calibration],
        }


def _status(test: SurvivalDataset, tau: float):
    is_event = (test.event == 1) & (test.time <= tau)
    is_survivor = test.time > tau
    return is_event, is_survivor


def censoring_weights(test: SurvivalDataset, tau: float) -> np.ndarray:
    """Inverse marginal-Kaplan-Meier censoring weights at the horizon."""
    if not tau > 0:
        raise ValidationError(f"tau must be > 0, got {tau}")
    curve = censoring_km(test.time, test.event)
    g_tau = float(curve.at(tau))
    if g_tau <= 0:
        raise ValidationError(
            f"censoring survival hits 0 before tau={tau}; horizon beyond support"
        )
    is_event, is_survivor = _status(test, tau)
    w = np.zeros(len(test))
    w[is_event] = 1.0 / curve.at_left(test.time[is_event])
    w[is_survivor] = 1.0 / g_tau
    n_capped = int(np.sum(w > WEIGHT_CAP))
    if n_capped:
        warnings.warn(
            f"{n_capped} censoring weight(s) exceeded {WEIGHT_CAP:g}; capped",
            RuntimeWarning,
            stacklevel=2,
        )
        w = np.minimum(w, WEIGHT_CAP)
    return w


def _check_predictions(predictions, n):
    predictions = np.asarray(predictions, dtype=float)
    if predictions.shape != (n,):
        raise ValidationError(f"need one prediction per test individual ({n})")
    if np.any(predictions < 0) or np.any(predictions > 1):
        raise ValidationError("survival predictions must lie in [0,1]")
    return predictions


def brier_ipcw(predictions, test: SurvivalDataset, weights, tau: float) -> float:
    """Weighted squared error of S(tau|x) against the observed status.

    With no censoring every weight is 1 and this is the plain mean of
    (I(T > tau) - S)^2.
    """
    s = _check_predictions(predictions, len(test))
    w = np.asarray(weights, dtype=float)
    is_event, is_survivor = _status(test, tau)
    resid = np.zeros(len(test))
    resid[is_event] = s[is_event] ** 2
    resid[is_survivor] = (1.0 - s[is_survivor]) ** 2
    return float(np.mean(w * resid))


def scaled_brier(brier: float, test: SurvivalDataset, weights,
                 tau: float) -> float:
    """Percent improvement over the marginal Kaplan-Meier prediction,
    computed on the same test set: 100 * (1 - brier / brier_KM)."""
    reference = _km_survival_at(test.time, test.event, tau)
    ref_brier = brier_ipcw(np.full(len(test), reference), test, weights, tau)
    if ref_brier <= 0:
        raise ValidationError("degenerate Kaplan-Meier reference Brier score")
    return float(100.0 * (1.0 - brier / ref_brier))


def _km_survival_at(time, event, t) -> float:
    times, hazard = _marginal_hazards(np.asarray(time, dtype=float),
                                      np.asarray(event, dtype=int), "event")
    survival = np.cumprod(1.0 - hazard)
    idx = np.searchsorted(times, t, side="right")
    return float(survival[idx - 1]) if idx > 0 else 1.0


def uno_c(predictions, test: SurvivalDataset, weights, tau: float) -> float:
    """Weighted concordance: over pairs where i has an observed event
    before tau and before j's time, credit I(risk_i > risk_j), ties 0.5,
    pair weight w_i^2."""
    s = _check_predictions(predictions, len(test))
    w = np.asarray(weights, dtype=float)
    is_event, _ = _status(test, tau)
    idx_i = np.flatnonzero(is_event)
    if idx_i.size == 0:
        raise ValidationError("no observed events before tau")

    num = 0.0
    den = 0.0
    for i in idx_i:
        later = test.time > test.time[i]
        if not later.any():
            continue
        pair_w = w[i] ** 2
        concordant = s[i] < s[later]       # lower survival = higher risk
        tied = s[i] == s[later]
        num += pair_w * float(np.sum(concordant) + 0.5 * np.sum(tied))
        den += pair_w * float(later.sum())
    if den == 0:
        raise ValidationError("no comparable pairs for the concordance index")
    return float(100.0 * num / den)


def auc_t(predictions, test: SurvivalDataset, weights, tau: float) -> float:
    """Cumulative/dynamic AUC at tau: weighted probability that a case
    (event by tau) is ranked riskier than a control (still at risk at tau)."""
    s = _check_predictions(predictions, len(test))
    w = np.asarray(weights, dtype=float)
    is_event, is_survivor = _status(test, tau)
    cases = np.flatnonzero(is_event)
    controls = np.flatnonzero(is_survivor)
    if cases.size == 0:
        raise ValidationError("no cases (events by tau) in the test set")
    if controls.size == 0:
        raise ValidationError("no controls (at risk at tau) in the test set")

    # Pairwise comparison matrix is small relative to model fitting; keep
    # the dependence on index order deterministic.
    s_case = s[cases][:, None]
    s_ctrl = s[controls][None, :]
    credit = (s_case < s_ctrl) + 0.5 * (s_case == s_ctrl)
    pair_w = w[cases][:, None] * w[controls][None, :]
    den = float(pair_w.sum())
    if den <= 0:
        raise ValidationError("all case/control pair weights are zero")
    return float(100.0 * np.sum(pair_w * credit) / den)


def calibration_table(predictions, test: SurvivalDataset, tau: float,
                      bins: int = 10):
    """Group by predicted risk quantiles; compare the mean predicted risk
    to the Kaplan-Meier risk within each group at tau.

    Groups smaller than 2 are merged into their neighbor and flagged.
    """
    s = _check_predictions(predictions, len(test))
    if bins < 1:
        raise ValidationError("bins must be >= 1")
    risk = 1.0 - s
    edges = np.quantile(risk, np.linspace(0.0, 1.0, bins + 1))
    edges = np.unique(edges)  # identical quantiles collapse the bin
    if len(edges) < 2:
        groups = [np.arange(len(test))]  # all predictions identical
        merged = bins > 1
    else:
        assignment = np.clip(np.searchsorted(edges, risk, side="right") - 1,
                             0, len(edges) - 2)
        groups = [np.flatnonzero(assignment == b) for b in range(len(edges) - 1)]
        groups = [g for g in groups if g.size]
        merged = len(groups) < bins
        # Sweep left to right, folding undersized groups into the next one.
        folded = []
        for g in groups:
            if folded and folded[-1].size < 2:
                folded[-1] = np.concatenate([folded[-1], g])
            else:
                folded.append(g)
        if len(folded) > 1 and folded[-1].size < 2:
            folded[-2] = np.concatenate([folded[-2], folded[-1]])
            folded.pop()
        merged = merged or (len(folded) < len(groups))
        groups = folded

    rows = []
    for g in groups:
        observed = 1.0 - _km_survival_at(test.time[g], test.event[g], tau)
        rows.append({
            "risk_low": float(risk[g].min()),
            "risk_high": float(risk[g].max()),
            "mean_predicted": float(risk[g].mean()),
            "observed": float(observed),
            "count": int(g.size),
        })
    return tuple(rows), bool(merged)


def compute_metrics(predictions, test: SurvivalDataset, tau: float,
                    bins: int = 10) -> MetricReport:
    """All metrics at one horizon, sharing one set of censoring weights."""
    w = censoring_weights(test, tau)
    brier = brier_ipcw(predictions, test, w, tau)
    rows, merged = calibration_table(predictions, test, tau, bins)
    if merged:
        rows = tuple({**row, "merged": True} for row in rows)
    return MetricReport(
        brier=brier,
        scaled_brier=scaled_brier(brier, test, w, tau),
        c_index=uno_c(predictions, test, w, tau),
        auc=auc_t(predictions, test, w, tau),
        horizon=float(tau),
        calibration=rows,
    )
