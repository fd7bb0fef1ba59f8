from .linear import GLMClassifier, LogisticRegression
from .mlp import MLPClassifier
from .model import (
    FAMILIES,
    FeatureMismatchError,
    ModelSpec,
    TrainedModel,
    fit_model,
    predict,
    train_decision_tree,
    train_glm,
    train_logistic_regression,
    train_mlp,
    train_random_forest,
)
from .preprocessing import MissingValueImputer, StandardizationParams, Standardizer, standardize_fit_apply
from .tree import DecisionTreeClassifier, RandomForestClassifier, RandomForestCV

__all__ = [
    "FAMILIES", "DecisionTreeClassifier", "FeatureMismatchError", "GLMClassifier", "LogisticRegression",
    "MLPClassifier", "MissingValueImputer", "ModelSpec", "RandomForestCV", "RandomForestClassifier",
    "StandardizationParams", "Standardizer", "TrainedModel", "fit_model", "predict", "standardize_fit_apply",
    "train_decision_tree", "train_glm", "train_logistic_regression", "train_mlp", "train_random_forest",
]
