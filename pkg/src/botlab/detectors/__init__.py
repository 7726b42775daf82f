"""Bot detectors behind one uniform model interface.

Three kinds of model answer ``predict`` with a bot probability in
[0, 1]: from-scratch bagged decision trees, a mixture of logistic
experts, and an adapter over externally produced score files. Trained
models carry their feature schema and a training fingerprint
(seed + data digest) and serialize to a versioned JSON file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..core_data import atomic_write_text, load_predictions
from .features import (FEATURE_GROUPS, FEATURE_NAMES, FeatureVector,
                       dataset_features, extract_features,
                       extract_features_bulk, feature_matrix)
from .mixture import MixtureModel, MixtureParams, train_mixture
from .trees import TreeParams, forest_probabilities, train_forest

__all__ = [
    "FEATURE_GROUPS", "FEATURE_NAMES", "FeatureVector", "extract_features",
    "extract_features_bulk", "dataset_features", "feature_matrix",
    "TreeParams", "MixtureParams", "DetectorModel", "train_bagged_trees",
    "train_mixture_of_experts", "load_external_predictions", "predict",
    "predict_many", "save_model", "load_model",
]

KIND_TREES = "bagged_trees"
KIND_MIXTURE = "mixture_of_experts"
KIND_EXTERNAL = "external"

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DetectorModel:
    kind: str
    feature_schema: tuple[str, ...] | None
    training_fingerprint: str
    payload: object  # kind-specific parameters

    @property
    def coverage(self) -> frozenset[str] | None:
        """Accounts an external model can answer for; None = unlimited."""
        if self.kind == KIND_EXTERNAL:
            return frozenset(self.payload["scores"])
        return None


def _fingerprint(seed: int | None, X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=float).tobytes())
    h.update(np.ascontiguousarray(y, dtype=int).tobytes())
    return f"seed={seed} data=sha256:{h.hexdigest()[:16]}"


def _training_arrays(features: Sequence[FeatureVector],
                     labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    if len(features) != len(labels):
        raise ValueError(
            f"{len(features)} feature vectors vs {len(labels)} labels")
    X = feature_matrix(features)
    y = np.asarray([int(v) for v in labels], dtype=int)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (human) or 1 (bot)")
    return X, y


def train_bagged_trees(features: Sequence[FeatureVector],
                       labels: Sequence[int],
                       params: TreeParams | None = None,
                       seed: int = 0) -> DetectorModel:
    params = params or TreeParams()
    X, y = _training_arrays(features, labels)
    trees = train_forest(X, y, params, seed)
    return DetectorModel(
        kind=KIND_TREES,
        feature_schema=features[0].schema,
        training_fingerprint=_fingerprint(seed, X, y),
        payload={"trees": trees, "params": params},
    )


def train_mixture_of_experts(features: Sequence[FeatureVector],
                             labels: Sequence[int],
                             params: MixtureParams | None = None
                             ) -> DetectorModel:
    params = params or MixtureParams()
    X, y = _training_arrays(features, labels)
    model = train_mixture(X, y, params, schema=features[0].schema)
    return DetectorModel(
        kind=KIND_MIXTURE,
        feature_schema=features[0].schema,
        training_fingerprint=_fingerprint(None, X, y),
        payload=model,
    )


def load_external_predictions(path, source: str) -> DetectorModel:
    """Wrap one source of a ``source,account,probability`` file as a
    model that answers only for the accounts present in the file."""
    by_source = load_predictions(path)
    if source not in by_source:
        raise ValueError(
            f"{path}: no rows for source {source!r} "
            f"(present: {sorted(by_source)})")
    scores = by_source[source]
    digest = hashlib.sha256(
        json.dumps(sorted(scores.items())).encode()).hexdigest()[:16]
    return DetectorModel(
        kind=KIND_EXTERNAL,
        feature_schema=None,
        training_fingerprint=f"source={source} data=sha256:{digest}",
        payload={"source": source, "scores": dict(scores)},
    )


def external_from_scores(source: str,
                         scores: Mapping[str, float]) -> DetectorModel:
    """External model straight from an in-memory score map."""
    for acct, p in scores.items():
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"score for {acct!r} outside [0, 1]: {p}")
    digest = hashlib.sha256(
        json.dumps(sorted(scores.items())).encode()).hexdigest()[:16]
    return DetectorModel(kind=KIND_EXTERNAL, feature_schema=None,
                         training_fingerprint=f"source={source} "
                                              f"data=sha256:{digest}",
                         payload={"source": source, "scores": dict(scores)})


def predict_many(model: DetectorModel,
                 features: Sequence[FeatureVector]) -> list[float]:
    """Bot probabilities for a batch of feature vectors."""
    if not features:
        return []
    if model.kind == KIND_EXTERNAL:
        scores = model.payload["scores"]
        out = []
        for fv in features:
            if fv.account not in scores:
                raise KeyError(
                    f"external source {model.payload['source']!r} has no "
                    f"prediction for account {fv.account!r}")
            out.append(float(scores[fv.account]))
        return out
    schema = features[0].schema
    if schema != model.feature_schema:
        raise ValueError(
            f"feature schema {schema} does not match the model's "
            f"{model.feature_schema}")
    X = feature_matrix(features)
    if model.kind == KIND_TREES:
        probs = forest_probabilities(model.payload["trees"], X)
    elif model.kind == KIND_MIXTURE:
        probs = model.payload.probabilities(X)
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    return [float(p) for p in probs]


def predict(model: DetectorModel, fv: FeatureVector) -> float:
    return predict_many(model, [fv])[0]


def score_map(model: DetectorModel,
              features: Sequence[FeatureVector]) -> dict[str, float]:
    return {fv.account: p
            for fv, p in zip(features, predict_many(model, features))}


# ---------------------------------------------------------------------------
# serialization

def save_model(model: DetectorModel, path) -> None:
    doc: dict = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "feature_schema": (list(model.feature_schema)
                           if model.feature_schema else None),
        "training_fingerprint": model.training_fingerprint,
    }
    if model.kind == KIND_TREES:
        params: TreeParams = model.payload["params"]
        doc["payload"] = {
            "trees": model.payload["trees"],
            "params": {"n_trees": params.n_trees,
                       "max_depth": params.max_depth,
                       "min_leaf": params.min_leaf},
        }
    elif model.kind == KIND_MIXTURE:
        m: MixtureModel = model.payload
        doc["payload"] = {
            "schema": list(m.schema),
            "theta": list(m.theta),
            "feature_mean": list(m.feature_mean),
            "feature_scale": list(m.feature_scale),
            "params": {"epochs": m.params.epochs,
                       "learning_rate": m.params.learning_rate},
        }
    elif model.kind == KIND_EXTERNAL:
        doc["payload"] = model.payload
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    atomic_write_text(path, json.dumps(doc) + "\n")


def load_model(path) -> DetectorModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format {version!r}")
    kind = doc["kind"]
    schema = (tuple(doc["feature_schema"])
              if doc.get("feature_schema") else None)
    if kind == KIND_TREES:
        p = doc["payload"]["params"]
        payload = {"trees": doc["payload"]["trees"],
                   "params": TreeParams(**p)}
    elif kind == KIND_MIXTURE:
        p = doc["payload"]
        payload = MixtureModel(
            schema=tuple(p["schema"]), theta=tuple(p["theta"]),
            feature_mean=tuple(p["feature_mean"]),
            feature_scale=tuple(p["feature_scale"]),
            params=MixtureParams(**p["params"]))
    elif kind == KIND_EXTERNAL:
        payload = doc["payload"]
    else:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    return DetectorModel(kind=kind, feature_schema=schema,
                         training_fingerprint=doc["training_fingerprint"],
                         payload=payload)
