from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..errors import ValidationError

MISSING_FLAG = "following_was_missing"


@dataclass(frozen=True)
class StandardizationParams:
    """Per-column mean and population SD; constant columns map to 0."""

    mean: np.ndarray
    sd: np.ndarray
    constant: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scale = np.where(self.constant, 1.0, self.sd)
        return np.where(self.constant, 0.0, (X - self.mean) / scale)

    def invert(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        return np.where(self.constant, self.mean, Z * self.sd + self.mean)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d) -> "StandardizationParams":
        return cls(np.array(d["mean"], dtype=float), np.array(d["sd"], dtype=float),
                   np.array(d["constant"], dtype=bool))


def fit_standardization(X) -> StandardizationParams:
    X = np.asarray(X, dtype=float)
    if np.isnan(X).any():
        raise ValidationError("standardisation expects imputed input")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    # a tiny spread can underflow to sd == 0; such columns count as constant
    constant = (np.ptp(X, axis=0) == 0) | (sd == 0) if X.shape[0] else np.ones(X.shape[1], dtype=bool)
    return StandardizationParams(mean, sd, constant)


def standardize_fit_apply(X):
    """Standardise every column; returns ``(Z, params)``."""
    params = fit_standardization(X)
    return params.apply(X), params


class Standardizer(TransformerMixin, BaseEstimator):
    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.params_ = fit_standardization(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return self.params_.apply(check_array(X, dtype=np.float64))

    def inverse_transform(self, Z):
        check_is_fitted(self, "params_")
        return self.params_.invert(check_array(Z, dtype=np.float64))


class MissingValueImputer(TransformerMixin, BaseEstimator):
    """Training-median imputation for numeric columns; indicator columns take 0.

    When ``indicator_mask`` marks any column, one extra column is appended that
    is 1 for rows whose indicator cells were missing.
    """

    def __init__(self, indicator_mask=None):
        self.indicator_mask = indicator_mask

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan")
        self.n_features_in_ = X.shape[1]
        mask = np.zeros(X.shape[1], dtype=bool) if self.indicator_mask is None else np.asarray(self.indicator_mask, dtype=bool)
        if mask.shape != (X.shape[1],):
            raise ValidationError("indicator_mask must have one entry per column")
        self.indicator_ = mask
        fill = np.zeros(X.shape[1])
        for j in np.flatnonzero(~mask):
            col = X[:, j]
            col = col[~np.isnan(col)]
            fill[j] = float(np.median(col)) if col.size else 0.0
        self.fill_ = fill
        self.add_flag_ = bool(mask.any())
        return self

    def transform(self, X):
        check_is_fitted(self, "fill_")
        X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan")
        missing = np.isnan(X)
        out = np.where(missing, self.fill_, X)
        if self.add_flag_:
            flag = missing[:, self.indicator_].any(axis=1).astype(float)
            out = np.column_stack([out, flag])
        return out

    def output_names(self, names):
        return list(names) + ([MISSING_FLAG] if self.add_flag_ else [])

    def get_state(self) -> dict:
        return {"indicator": self.indicator_.tolist(), "fill": self.fill_.tolist(), "add_flag": self.add_flag_}

    def set_state(self, state):
        self.indicator_ = np.array(state["indicator"], dtype=bool)
        self.fill_ = np.array(state["fill"], dtype=float)
        self.add_flag_ = bool(state["add_flag"])
        self.n_features_in_ = len(self.fill_)
        return self
