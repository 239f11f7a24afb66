"""Survival super learners: discrete-time, iterative continuous-time, and
the pairwise state learner, with a shared candidate-learner library."""

from .data import (
    SurvivalDataset,
    SyntheticTruth,
    assign_folds,
    discretize,
    load_dataset,
    make_grid,
    save_dataset,
    simulate_synthetic,
)
from .discrete import DiscretePredictor, run_discrete_super_learner
from .continuous import ContinuousPredictor, run_continuous_super_learner
from .errors import (
    DegenerateEnsembleError,
    LearnerError,
    NumericalError,
    SurvStackError,
    ValidationError,
)
from .learners import LearnerSpec, fit_learner
from .metrics import MetricReport, compute_metrics
from .states import StatePredictor, run_state_learner

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "SurvivalDataset",
    "SyntheticTruth",
    "assign_folds",
    "discretize",
    "load_dataset",
    "make_grid",
    "save_dataset",
    "simulate_synthetic",
    "LearnerSpec",
    "fit_learner",
    "DiscretePredictor",
    "run_discrete_super_learner",
    "ContinuousPredictor",
    "run_continuous_super_learner",
    "StatePredictor",
    "run_state_learner",
    "MetricReport",
    "compute_metrics",
    "SurvStackError",
    "ValidationError",
    "NumericalError",
    "DegenerateEnsembleError",
    "LearnerError",
]
