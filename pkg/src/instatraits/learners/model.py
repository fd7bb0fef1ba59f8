"""Model specs, fitted-model bundles and JSON serialisation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigurationError, SchemaError, ValidationError
from ..psychometrics import Scheme, TraitLabel
from .linear import GLMClassifier, LogisticRegression
from .mlp import MLPClassifier
from .preprocessing import MissingValueImputer, StandardizationParams, fit_standardization
from .tree import DecisionTreeClassifier, RandomForestCV

MODEL_FORMAT = "instatraits.model"
MODEL_VERSION = 1

FAMILIES = ("DT", "LR", "GLM", "MLP", "RF")

ESTIMATORS = {
    "DT": DecisionTreeClassifier,
    "LR": LogisticRegression,
    "GLM": GLMClassifier,
    "MLP": MLPClassifier,
    "RF": RandomForestCV,
}

DEFAULT_PARAMS = {
    "DT": {"max_depth": 10, "min_samples_leaf": 2},
    "LR": {"alpha": 1e-2, "tol": 1e-8, "max_iter": 500},
    "GLM": {"alpha": 1e-2, "tol": 1e-8, "max_iter": 500},
    "MLP": {"hidden_layer_sizes": [50], "epochs": 10, "batch_size": 32, "learning_rate": 0.01, "alpha": 1e-4},
    "RF": {"n_estimators_grid": [50, 100, 200], "max_depth_grid": [4, 8, 16], "cv": 3},
}

_SEEDED = {"DT", "MLP", "RF"}


class FeatureMismatchError(ValidationError):
    """Feature names offered to a model do not match the names it was trained on."""


@dataclass(frozen=True)
class ModelSpec:
    family: str
    scheme: Scheme
    seed: int
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown model family {self.family!r}")
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.family == "LR" and self.scheme is not Scheme.TWO:
            raise ConfigurationError("logistic regression only supports the two-level scheme")
        if self.seed is None:
            raise ConfigurationError(f"{self.family} needs an explicit seed")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.family])
        if unknown:
            raise ConfigurationError(f"unknown {self.family} hyperparameters: {sorted(unknown)}")

    def resolved_params(self) -> dict:
        return {**DEFAULT_PARAMS[self.family], **self.params}

    def make_estimator(self):
        params = self.resolved_params()
        if self.family == "MLP":
            params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
        if self.family in _SEEDED:
            params["random_state"] = int(self.seed)
        return ESTIMATORS[self.family](**params)

    def to_dict(self) -> dict:
        return {"family": self.family, "scheme": self.scheme.value, "seed": int(self.seed),
                "params": self.resolved_params()}

    @classmethod
    def from_dict(cls, d) -> "ModelSpec":
        return cls(d["family"], Scheme(d["scheme"]), int(d["seed"]), dict(d.get("params", {})))


def _codes(labels, scheme: Scheme) -> np.ndarray:
    out = []
    for lab in labels:
        value = lab.value if isinstance(lab, TraitLabel) else lab
        if value not in scheme.classes:
            raise ValidationError(f"label {value!r} is not legal for scheme {scheme.value}")
        out.append(scheme.classes.index(value))
    return np.array(out, dtype=int)


@dataclass
class TrainedModel:
    spec: ModelSpec
    feature_names: tuple[str, ...]
    imputer: MissingValueImputer
    standardization: StandardizationParams
    estimator: object
    metadata: dict = field(default_factory=dict)

    @property
    def classes(self) -> tuple[str, ...]:
        return self.spec.scheme.classes

    def _prepare(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise FeatureMismatchError(f"expected {len(self.feature_names)} features")
        return self.standardization.apply(self.imputer.transform(X))

    def predict_proba_matrix(self, X) -> np.ndarray:
        """Per-class scores over the full scheme class list (absent classes score 0)."""
        Z = self._prepare(X)
        raw = self.estimator.predict_proba(Z)
        out = np.zeros((Z.shape[0], len(self.classes)))
        for j, code in enumerate(self.estimator.classes_):
            out[:, int(code)] = raw[:, j]
        return out

    def predict_matrix(self, X) -> list[str]:
        proba = self.predict_proba_matrix(X)
        return [self.classes[i] for i in np.argmax(proba, axis=1)]

    def to_dict(self) -> dict:
        params = self.estimator.get_params()
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "spec": self.spec.to_dict(),
            "features": list(self.feature_names),
            "imputer": self.imputer.get_state(),
            "standardization": self.standardization.to_dict(),
            "estimator": {
                "class": type(self.estimator).__name__,
                "params": {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()},
                "state": self.estimator.get_state(),
            },
            "metadata": self.metadata,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, allow_nan=False) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d) -> "TrainedModel":
        if d.get("format") != MODEL_FORMAT:
            raise SchemaError("not a serialized model")
        if d.get("version") != MODEL_VERSION:
            raise SchemaError(f"unsupported model version {d.get('version')}")
        spec = ModelSpec.from_dict(d["spec"])
        est_cls = ESTIMATORS[spec.family]
        params = dict(d["estimator"]["params"])
        if "hidden_layer_sizes" in params:
            params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
        for k in ("n_estimators_grid", "max_depth_grid"):
            if k in params:
                params[k] = tuple(params[k])
        estimator = est_cls(**params).set_state(d["estimator"]["state"])
        imputer = MissingValueImputer().set_state(d["imputer"])
        return cls(spec, tuple(d["features"]), imputer, StandardizationParams.from_dict(d["standardization"]),
                   estimator, d.get("metadata", {}))

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _as_array(matrix, feature_names):
    if hasattr(matrix, "values") and hasattr(matrix, "names"):
        names = tuple(matrix.names)
        from ..featureset import FOLLOWING

        indicator = np.array([c == FOLLOWING for c in matrix.categories], dtype=bool)
        return np.asarray(matrix.values, dtype=float), names, indicator
    X = np.asarray(matrix, dtype=float)
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    return X, names, None


def fit_model(matrix, labels: Sequence, spec: ModelSpec, feature_names=None, indicator_mask=None) -> TrainedModel:
    """Impute, standardise and fit one learner.

    ``matrix`` may hold ``nan``; ``indicator_mask`` flags binary following
    columns (imputed with 0 plus a was-missing flag) when ``matrix`` is a
    plain array.
    """
    X, names, mask = _as_array(matrix, feature_names)
    if indicator_mask is not None:
        mask = np.asarray(indicator_mask, dtype=bool)
    if X.shape[0] != len(labels):
        raise ValidationError("matrix rows and labels differ in length")
    y = _codes(labels, spec.scheme)
    imputer = MissingValueImputer(mask).fit(X)
    Xi = imputer.transform(X)
    std = fit_standardization(Xi)
    estimator = spec.make_estimator()
    estimator.fit(std.apply(Xi), y)
    meta = {
        "n_train": int(X.shape[0]),
        "class_counts": {c: int(np.sum(y == i)) for i, c in enumerate(spec.scheme.classes)},
    }
    if hasattr(estimator, "loss_path_"):
        meta["iterations"] = int(estimator.n_iter_)
        meta["converged"] = bool(estimator.converged_)
    if hasattr(estimator, "loss_curve_"):
        meta["epochs"] = int(estimator.n_iter_)
    if hasattr(estimator, "cv_results_"):
        meta["cv_best"] = estimator.best_params_
        meta["cv_accuracy"] = estimator.best_score_
    return TrainedModel(spec, names, imputer, std, estimator, meta)


def _train(family):
    def train(matrix, labels, spec: ModelSpec, feature_names=None, indicator_mask=None) -> TrainedModel:
        if spec.family != family:
            raise ConfigurationError(f"expected a {family} spec, got {spec.family}")
        return fit_model(matrix, labels, spec, feature_names, indicator_mask)

    train.__name__ = f"train_{family.lower()}"
    train.__doc__ = f"Fit a {family} model; see :func:`fit_model`."
    return train


train_decision_tree = _train("DT")
train_logistic_regression = _train("LR")
train_glm = _train("GLM")
train_random_forest = _train("RF")
train_mlp = _train("MLP")


def predict(model: TrainedModel, row: Mapping[str, float], strict: bool = True):
    """Label and per-class scores for one named feature vector.

    Every model feature must be present in ``row``; with ``strict`` extra
    names are rejected too. ``nan`` values are imputed as in training.
    """
    missing = [n for n in model.feature_names if n not in row]
    if missing:
        raise FeatureMismatchError(f"row lacks feature {missing[0]!r}")
    if strict:
        extra = sorted(set(row) - set(model.feature_names))
        if extra:
            raise FeatureMismatchError(f"unknown feature name {extra[0]!r}")
    x = np.array([[float(row[n]) for n in model.feature_names]])
    scores = model.predict_proba_matrix(x)[0]
    label = model.classes[int(np.argmax(scores))]
    return label, dict(zip(model.classes, (float(s) for s in scores)))
