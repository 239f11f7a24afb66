"""Run configuration: a YAML file describing one fit (or simulation).

Top-level keys:

    method: discrete | continuous | statelearner
    tau: evaluation horizon (> 0)
    folds: cross-validation folds (default 5)
    seed: master seed (default 0)
    ensemble: weight the library (true, default) or select the single best
    loss: ipcw | l2 | loglik          # discrete only
    discretization: {periods: int, scheme: equal-width | event-quantile}
    grid_points: int                  # continuous / statelearner (default 100)
    event_learners: [{family: ..., label: ..., hyperparameters: {...}}, ...]
    censoring_learners: [...]         # required for continuous / statelearner
    data / test / output: paths       # overridable on the command line
    simulate: {n: int, scenario: PH | interaction, censoring_rate: float}

Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .discrete import LOSSES
from .errors import ValidationError
from .learners import DISCRETE_FAMILIES, LearnerSpec

__all__ = ["RunConfig", "SimulateConfig", "load_config", "config_from_dict"]

METHODS = ("discrete", "continuous", "statelearner")
_TOP_KEYS = {
    "method", "tau", "folds", "seed", "ensemble", "loss", "discretization",
    "grid_points", "event_learners", "censoring_learners", "data", "test",
    "output", "simulate",
}


@dataclass(frozen=True)
class SimulateConfig:
    n: int
    scenario: str = "PH"
    censoring_rate: float = 0.3

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"simulate.n must be >= 1, got {self.n}")
        if not 0.0 <= self.censoring_rate < 1.0:
            raise ValidationError("simulate.censoring_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return {"n": int(self.n), "scenario": self.scenario,
                "censoring_rate": float(self.censoring_rate)}


@dataclass(frozen=True)
class RunConfig:
    method: str
    tau: float
    event_learners: tuple
    censoring_learners: tuple = ()
    loss: str = "ipcw"
    folds: int = 5
    seed: int = 0
    ensemble: bool = True
    periods: int = 20
    scheme: str = "equal-width"
    grid_points: int = 100
    data: str | None = None
    test: str | None = None
    output: str | None = None
    simulate: SimulateConfig | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(
                f"method must be one of {METHODS}, got {self.method!r}"
            )
        if not self.tau > 0:
            raise ValidationError(f"tau must be > 0, got {self.tau}")
        if not self.event_learners:
            raise ValidationError("event_learners must be non-empty")
        if self.method in ("continuous", "statelearner") and not self.censoring_learners:
            raise ValidationError(
                f"method {self.method!r} requires censoring_learners"
            )
        if self.method == "discrete" and self.loss not in LOSSES:
            raise ValidationError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.folds < 2:
            raise ValidationError("folds must be >= 2")
        # Family/method mismatches would only surface as every-fold drops;
        # reject them up front instead.
        event_families = {s.family for s in self.event_learners}
        if self.method == "discrete":
            bad = sorted(event_families - DISCRETE_FAMILIES)
            if bad:
                raise ValidationError(
                    f"method 'discrete' fits period-hazard families only "
                    f"({sorted(DISCRETE_FAMILIES)}); got {bad}"
                )
            if self.censoring_learners:
                raise ValidationError(
                    "method 'discrete' takes no censoring_learners "
                    "(censoring is reweighted marginally)"
                )
        else:
            cens_families = {s.family for s in self.censoring_learners}
            bad = sorted((event_families | cens_families) & DISCRETE_FAMILIES)
            if bad:
                raise ValidationError(
                    f"method {self.method!r} needs continuous-time families; "
                    f"{bad} model period hazards"
                )

    def to_dict(self) -> dict:
        """Canonical echo; feeding it back reproduces the run."""
        out = {
            "method": self.method,
            "tau": float(self.tau),
            "folds": int(self.folds),
            "seed": int(self.seed),
            "ensemble": bool(self.ensemble),
            "event_learners": [s.to_dict() for s in self.event_learners],
        }
        if self.censoring_learners:
            out["censoring_learners"] = [s.to_dict()
                                         for s in self.censoring_learners]
        if self.method == "discrete":
            out["loss"] = self.loss
            out["discretization"] = {"periods": int(self.periods),
                                     "scheme": self.scheme}
        else:
            out["grid_points"] = int(self.grid_points)
        if self.simulate is not None:
            out["simulate"] = self.simulate.to_dict()
        return out


def _spec_list(raw, where):
    if not isinstance(raw, list) or not raw:
        raise ValidationError(f"{where} must be a non-empty list")
    specs = []
    for entry in raw:
        if not isinstance(entry, dict) or "family" not in entry:
            raise ValidationError(f"{where}: each entry needs a 'family' key")
        extra = set(entry) - {"family", "label", "hyperparameters"}
        if extra:
            raise ValidationError(f"{where}: unknown keys {sorted(extra)}")
        specs.append(LearnerSpec(
            family=entry["family"],
            label=entry.get("label", entry["family"]),
            hyperparameters=entry.get("hyperparameters") or {},
        ))
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ValidationError(f"{where}: duplicate labels")
    return tuple(specs)


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    for key in ("method", "tau", "event_learners"):
        if key not in raw:
            raise ValidationError(f"config is missing required key {key!r}")

    disc = raw.get("discretization") or {}
    if not isinstance(disc, dict) or set(disc) - {"periods", "scheme"}:
        raise ValidationError("discretization accepts only periods and scheme")

    sim = None
    if raw.get("simulate") is not None:
        s = raw["simulate"]
        if not isinstance(s, dict) or "n" not in s:
            raise ValidationError("simulate needs at least an 'n' key")
        if set(s) - {"n", "scenario", "censoring_rate"}:
            raise ValidationError("unknown simulate keys")
        sim = SimulateConfig(
            n=int(s["n"]),
            scenario=s.get("scenario", "PH"),
            censoring_rate=float(s.get("censoring_rate", 0.3)),
        )

    return RunConfig(
        method=str(raw["method"]),
        tau=float(raw["tau"]),
        event_learners=_spec_list(raw["event_learners"], "event_learners"),
        censoring_learners=(
            _spec_list(raw["censoring_learners"], "censoring_learners")
            if raw.get("censoring_learners") else ()
        ),
        loss=str(raw.get("loss", "ipcw")),
        folds=int(raw.get("folds", 5)),
        seed=int(raw.get("seed", 0)),
        ensemble=bool(raw.get("ensemble", True)),
        periods=int(disc.get("periods", 20)),
        scheme=str(disc.get("scheme", "equal-width")),
        grid_points=int(raw.get("grid_points", 100)),
        data=raw.get("data"),
        test=raw.get("test"),
        output=raw.get("output"),
        simulate=sim,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError:
        raise
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML ({exc})")
    if raw is None:
        raise ValidationError(f"{path}: empty config")
    return config_from_dict(raw)
