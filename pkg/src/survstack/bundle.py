"""Fitted-model container: magic bytes, schema version, then JSON.

Layout: the 9 bytes b"SVSTACK1\\n" followed by one UTF-8 JSON document
with sorted keys. The payload carries a semantic ``schema_version``;
loading refuses a different major version, so old readers fail fast
instead of mis-parsing.
"""

from __future__ import annotations

import json

from .errors import ValidationError

__all__ = ["MAGIC", "SCHEMA_VERSION", "save_bundle", "load_bundle"]

MAGIC = b"SVSTACK1\n"
SCHEMA_VERSION = "1.0"


def _predictor_class(kind: str):
    from .continuous import ContinuousPredictor
    from .discrete import DiscretePredictor
    from .states import StatePredictor

    classes = {
        "discrete": DiscretePredictor,
        "continuous": ContinuousPredictor,
        "state": StatePredictor,
    }
    if kind not in classes:
        raise ValidationError(f"unknown predictor kind {kind!r}")
    return classes[kind]


def save_bundle(path, predictor, config_echo: dict, covariate_names=()) -> None:
    """Write predictor + config echo; bytes are a pure function of both."""
    model = predictor.to_dict()
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": model["kind"],
        "config": config_echo,
        "covariate_names": list(covariate_names),
        "model": model,
    }
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(body.encode("utf-8"))


def load_bundle(path):
    """Read a bundle back; returns (predictor, payload dict)."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head != MAGIC:
            raise ValidationError(f"{path}: not a model bundle (bad magic bytes)")
        try:
            payload = json.loads(fh.read().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{path}: corrupt bundle body ({exc})")

    version = str(payload.get("schema_version", ""))
    major = version.split(".", 1)[0]
    if major != SCHEMA_VERSION.split(".", 1)[0]:
        raise ValidationError(
            f"{path}: bundle schema {version!r} unsupported "
            f"(this build reads {SCHEMA_VERSION.split('.', 1)[0]}.x)"
        )
    cls = _predictor_class(payload.get("kind", ""))
    return cls.from_dict(payload["model"]), payload
