"""Marginal censoring survival curve shared by the pipelines and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .learners import _marginal_hazards

__all__ = ["CensoringCurve", "censoring_km"]


@dataclass(frozen=True)
class CensoringCurve:
    """Right-continuous step estimate of G(t) = P(C > t); G(0) = 1."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValidationError("censoring curve arrays must align")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("censoring curve times must increase")
        if np.any(values < 0) or np.any(values > 1) or np.any(np.diff(values) > 0):
            raise ValidationError("censoring curve must be non-increasing in [0,1]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def at(self, t) -> np.ndarray:
        """G(t), right-continuous."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        return np.concatenate([[1.0], self.values])[idx]

    def at_left(self, t) -> np.ndarray:
        """G(t-), the left limit."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="left")
        return np.concatenate([[1.0], self.values])[idx]


def censoring_km(time, event) -> CensoringCurve:
    """Kaplan-Meier estimate of the censoring distribution.

    Ties at a shared observed time resolve with events before censorings,
    so the censoring risk set at u excludes the events at u.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=int)
    if time.size == 0:
        raise ValidationError("censoring curve needs at least one observation")
    times, hazard = _marginal_hazards(time, event, "censoring")
    return CensoringCurve(times, np.cumprod(1.0 - hazard))
