"""Uniform surface over the four model kinds plus file round-tripping.

A trained predictor bundles the fitted model with an optional Nystroem
feature map, so prediction always starts from raw features.  Model
files are JSON documents; floats serialise via repr and reload
numerically exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import baselines, storm
from .chain_crf import ChainCrfParams, InferenceMode
from .data import NystroemMap, Standardizer, atomic_write_text

__all__ = [
    "MODEL_ORDER",
    "MODEL_KINDS",
    "ModelOps",
    "TrainedPredictor",
    "save_model",
    "load_model",
]

SCHEMA = "stormcrf-model-v1"

MODEL_ORDER = ("storm", "ordlog", "nest", "logreg")


@dataclass(frozen=True)
class ModelOps:
    fit: callable
    fit_cv: callable
    predict: callable
    predict_proba: callable


MODEL_KINDS = {
    "storm": ModelOps(storm.fit, storm.fit_cv, storm.predict, storm.predict_proba),
    "ordlog": ModelOps(
        baselines.ol_fit, baselines.ol_fit_cv, baselines.ol_predict, baselines.ol_proba
    ),
    "nest": ModelOps(
        baselines.nest_fit,
        baselines.nest_fit_cv,
        baselines.nest_predict,
        baselines.nest_proba,
    ),
    "logreg": ModelOps(
        baselines.lr_fit, baselines.lr_fit_cv, baselines.lr_predict, baselines.lr_proba
    ),
}


@dataclass
class TrainedPredictor:
    kind: str
    model: object
    nystroem: NystroemMap | None = None

    def _features(self, x):
        if self.nystroem is not None:
            return self.nystroem.transform(x)
        return np.asarray(x, dtype=np.float64)

    def predict(self, x):
        return MODEL_KINDS[self.kind].predict(self.model, self._features(x))

    def predict_proba(self, x):
        return MODEL_KINDS[self.kind].predict_proba(self.model, self._features(x))

    @property
    def k(self) -> int:
        return self.model.k

    @property
    def d_raw(self) -> int:
        if self.nystroem is not None:
            return self.nystroem.landmarks.shape[1]
        return self.model.standardizer.mean.size


def _config_doc(config: storm.TrainConfig) -> dict:
    return {
        "l2_strength": config.l2_strength,
        "max_iterations": config.max_iterations,
        "gradient_tolerance": config.gradient_tolerance,
        "seed": config.seed,
        "mode": {
            "domain": config.mode.domain,
            "constrain_transitions": config.mode.constrain_transitions,
        },
        "prediction": config.prediction,
    }


def _config_from_doc(doc: dict) -> storm.TrainConfig:
    return storm.TrainConfig(
        l2_strength=doc["l2_strength"],
        max_iterations=doc["max_iterations"],
        gradient_tolerance=doc["gradient_tolerance"],
        seed=doc["seed"],
        mode=InferenceMode(
            domain=doc["mode"]["domain"],
            constrain_transitions=doc["mode"]["constrain_transitions"],
        ),
        prediction=doc["prediction"],
    )


def _params_doc(kind: str, model) -> dict:
    if kind == "storm":
        return {
            "node_weights": model.params.node_weights.tolist(),
            "edge_weights": model.params.edge_weights.tolist(),
        }
    if kind == "ordlog":
        return {
            "w": model.w.tolist(),
            "threshold_increments": model.threshold_increments.tolist(),
        }
    if kind == "nest":
        return {"weights": model.weights.tolist()}
    if kind == "logreg":
        return {"class_weights": model.class_weights.tolist()}
    raise ValueError(f"unknown model kind {kind!r}")


def _model_from_doc(kind: str, doc: dict):
    params = doc["params"]
    standardizer = Standardizer(
        mean=np.asarray(doc["standardization"]["mean"], dtype=np.float64),
        scale=np.asarray(doc["standardization"]["scale"], dtype=np.float64),
    )
    config = _config_from_doc(doc["config"])
    k = int(doc["k"])
    if kind == "storm":
        return storm.StormModel(
            params=ChainCrfParams(
                np.asarray(params["node_weights"], dtype=np.float64),
                np.asarray(params["edge_weights"], dtype=np.float64),
            ),
            config=config,
            standardizer=standardizer,
        )
    if kind == "ordlog":
        return baselines.OrderedLogitModel(
            w=np.asarray(params["w"], dtype=np.float64),
            threshold_increments=np.asarray(
                params["threshold_increments"], dtype=np.float64
            ),
            k=k,
            standardizer=standardizer,
            config=config,
        )
    if kind == "nest":
        return baselines.NestedBinaryModel(
            weights=np.asarray(params["weights"], dtype=np.float64),
            k=k,
            standardizer=standardizer,
            config=config,
        )
    if kind == "logreg":
        return baselines.MultinomialLogisticModel(
            class_weights=np.asarray(params["class_weights"], dtype=np.float64),
            k=k,
            standardizer=standardizer,
            config=config,
        )
    raise ValueError(f"unknown model kind {kind!r}")


def to_document(predictor: TrainedPredictor) -> dict:
    model = predictor.model
    doc = {
        "schema": SCHEMA,
        "kind": predictor.kind,
        "k": model.k,
        "d_raw": predictor.d_raw,
        "standardization": {
            "mean": model.standardizer.mean.tolist(),
            "scale": model.standardizer.scale.tolist(),
        },
        "nystroem": None,
        "params": _params_doc(predictor.kind, model),
        "config": _config_doc(model.config),
    }
    if predictor.nystroem is not None:
        doc["nystroem"] = {
            "gamma": predictor.nystroem.gamma,
            "landmarks": predictor.nystroem.landmarks.tolist(),
            "projection": predictor.nystroem.projection.tolist(),
        }
    return doc


def from_document(doc: dict) -> TrainedPredictor:
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported model schema {doc.get('schema')!r}")
    kind = doc["kind"]
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    nystroem = None
    if doc.get("nystroem"):
        nys = doc["nystroem"]
        nystroem = NystroemMap(
            landmarks=np.asarray(nys["landmarks"], dtype=np.float64),
            projection=np.asarray(nys["projection"], dtype=np.float64),
            gamma=float(nys["gamma"]),
        )
    return TrainedPredictor(kind=kind, model=_model_from_doc(kind, doc), nystroem=nystroem)


def save_model(path, predictor: TrainedPredictor):
    atomic_write_text(path, json.dumps(to_document(predictor), indent=2, sort_keys=True))


def load_model(path) -> TrainedPredictor:
    with open(path, "r", encoding="utf-8") as handle:
        return from_document(json.load(handle))
